"""Passive fingerprinting of FL client architectures from encrypted-traffic
metadata, plus a synthetic traffic simulator and resource-denial emulator."""

__version__ = "0.1.0"

from .labels import ArchLabel, ModelFamily

__all__ = ["ArchLabel", "ModelFamily", "__version__"]
