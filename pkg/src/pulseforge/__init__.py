"""Self-supervised rPPG heart-rate estimation toolkit (numpy only)."""

from pulseforge.errors import DegenerateInput, InvalidArgument

__all__ = ["DegenerateInput", "InvalidArgument"]
__version__ = "0.1.0"
