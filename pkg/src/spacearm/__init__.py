"""spacearm: free-floating multi-arm robot simulation and multi-agent training."""

__version__ = "0.1.0"
