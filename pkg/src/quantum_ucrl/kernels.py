"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``QUCRL_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("QUCRL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

backward_induction = _impl.backward_induction
evaluate_policy = _impl.evaluate_policy
rollout = _impl.rollout

__all__ = ["BACKEND", "backward_induction", "evaluate_policy", "rollout"]
