"""Approaching-face liveness detection (native core in Rust)."""

from ._flowgate import classify, flow, read_flo, roc_auc, simulate, __version__

__all__ = ["classify", "flow", "read_flo", "roc_auc", "simulate", "__version__"]
