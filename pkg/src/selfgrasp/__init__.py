"""Self-supervised grasp-angle learning in a desk-scale simulation."""

__version__ = "0.1.0"
