"""Conflict-aware evidential fusion and alternating progressive training
for incomplete multi-view classification."""

from . import autodiff, data, losses, networks, opinions, pipeline, special

__all__ = ["autodiff", "data", "losses", "networks", "opinions", "pipeline", "special"]
__version__ = "0.1.0"
