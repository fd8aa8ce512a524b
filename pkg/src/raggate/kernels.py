"""Kernel backend selection.

The compiled extension (raggate._ckernels) is used when it was built;
otherwise the numpy fallback (raggate._pykernels) is selected at import.
Set RAGGATE_KERNELS=python or RAGGATE_KERNELS=compiled to force a backend.
Both expose the same two functions with identical semantics:

    topk_ip(matrix, probe, tie_rank, n) -> (indices, scores)
    joint_scores(s1, s2) -> ndarray
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None


def available_backends() -> list[str]:
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (default: env var, then best)."""
    if name is None:
        name = os.environ.get("RAGGATE_KERNELS", "").strip() or None
    if name is None:
        return _ckernels if _ckernels is not None else _pykernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return _ckernels
    raise ValueError(f"unknown kernel backend: {name!r}")


def active_backend_name() -> str:
    return get_backend().NAME
