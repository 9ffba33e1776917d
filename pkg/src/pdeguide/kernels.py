"""Backend selection for the stencil kernels.

The compiled module is used when it imports; set ``PDEGUIDE_PURE_PYTHON=1``
to force the numpy fallback (the test-suite runs both).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("PDEGUIDE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

PAD_EVEN, PAD_ODD, PAD_WRAP = _pykernels.PAD_EVEN, _pykernels.PAD_ODD, _pykernels.PAD_WRAP
KIND_PERIODIC = _pykernels.KIND_PERIODIC
KIND_NEUMANN = _pykernels.KIND_NEUMANN
KIND_DIRICHLET = _pykernels.KIND_DIRICHLET
KIND_INITIAL = _pykernels.KIND_INITIAL
EQ_POISSON, EQ_HEAT, EQ_BURGERS = _pykernels.EQ_POISSON, _pykernels.EQ_HEAT, _pykernels.EQ_BURGERS
TARGET_NONE = _pykernels.TARGET_NONE
TARGET_STATE = _pykernels.TARGET_STATE
TARGET_GRADIENT = _pykernels.TARGET_GRADIENT


def backend(name: str | None = None):
    """Return the kernel module for ``name`` ("cython"/"python"), default active."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name: str) -> None:
    """Switch the process-wide backend (used by benchmarks and tests)."""
    global _impl, BACKEND
    _impl = backend(name)
    BACKEND = name


def __getattr__(attr):
    # laplacian, smooth, relax, ... resolve against the active backend
    return getattr(_impl, attr)
