"""Tests for the hfunet package."""
