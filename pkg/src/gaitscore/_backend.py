"""Kernel backend selection.

The compiled kernels (gaitscore._ctree) and the pure NumPy ones
(gaitscore._pytree) implement the same algorithms and produce bit-identical
trees; the compiled ones are just much faster. By default the compiled
module is used when the extension built, with the environment variable
GAITSCORE_BACKEND (values: "compiled", "python") forcing either one.
"""

from __future__ import annotations

import os

from . import _pytree

try:
    from . import _ctree
except ImportError:  # extension not built; the fallback covers everything
    _ctree = None


def available_backends() -> list[str]:
    return ["python"] if _ctree is None else ["compiled", "python"]


def load_kernels(name: str | None = None):
    """Return the kernel module for `name` (default: env var, then best)."""
    name = name or os.environ.get("GAITSCORE_BACKEND", "auto")
    if name == "python":
        return _pytree
    if name == "compiled":
        if _ctree is None:
            raise RuntimeError(
                "GAITSCORE_BACKEND=compiled but the gaitscore._ctree extension "
                "is not built; reinstall with the build toolchain available"
            )
        return _ctree
    if name == "auto":
        return _ctree if _ctree is not None else _pytree
    raise ValueError(f"unknown backend {name!r} (expected 'compiled', 'python' or 'auto')")


#: module used by the forest/explain drivers
KERNELS = load_kernels()


def backend_name() -> str:
    return KERNELS.BACKEND_NAME
