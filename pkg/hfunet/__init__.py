"""Hierarchically fused multi-task U-Net segmentation lab."""
