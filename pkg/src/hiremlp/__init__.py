"""Hierarchical token-rearrangement vision MLP with verifiable invariants."""

from . import accounting, hire, network, rearrange, tensor, variants, weights

__version__ = "0.1.0"
