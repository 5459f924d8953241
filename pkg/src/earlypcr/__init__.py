"""Early pCR prediction from longitudinal volumes with two-stage dual-task training."""

__version__ = "0.1.0"
