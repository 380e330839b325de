"""Flow-level network traffic classification toolkit."""

from .schema import CLASS_NAMES, FLOW_COLUMNS

__all__ = ["CLASS_NAMES", "FLOW_COLUMNS"]
__version__ = "0.1.0"
