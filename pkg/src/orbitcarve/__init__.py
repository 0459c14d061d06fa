"""Multi-view mesh carving: orbit cameras, initialization, differentiable
rendering, per-vertex color fitting and evaluation metrics."""

__version__ = "0.1.0"
