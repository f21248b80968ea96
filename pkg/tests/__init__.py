"""Tests for the hfunet segmentation lab."""
