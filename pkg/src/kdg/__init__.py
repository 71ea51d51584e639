"""Desk-scale laboratory for k-space acquisition learning and
trajectory-noise domain generalization in accelerated MRI reconstruction."""

__version__ = "0.1.0"
