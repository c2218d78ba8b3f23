"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the numpy
fallback. ``DEPTHRESP_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("cython", "python" or None = default)."""
    if name is None:
        name = os.environ.get("DEPTHRESP_BACKEND", "cython" if _compiled is not None else "python")
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


kernels = get_backend()
BACKEND = "python" if kernels is _fallback else "cython"
