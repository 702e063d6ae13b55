"""Non-negative reactive-mixing simulator and support-vector reduced-order models."""

__version__ = "0.1.0"
