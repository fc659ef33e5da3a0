"""Pilot-length and cluster-size design for non-coherent joint transmission in PPP networks."""

__version__ = "0.1.0"

from .config import ConfigError, SystemConfig  # noqa: E402

__all__ = ["ConfigError", "SystemConfig", "__version__"]
