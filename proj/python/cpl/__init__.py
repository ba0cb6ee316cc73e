"""Cross-preference learning toolkit: sentence-level vs context-aware translation.

The compiled extension carries the whole public surface: corpus handling and
the synthetic context task, proxy quality scorers, the tiny conditional
policy with exact gradients, preference-pair construction, the contrastive
objectives, the two-stage trainer, and the evaluation harness.
"""

from ._core import *  # noqa: F401,F403

__all__ = [name for name in dir() if not name.startswith("_")]
