"""gdnm - Simulator and verification harness for the generalized drainage network model."""

__version__ = "0.1.0"
