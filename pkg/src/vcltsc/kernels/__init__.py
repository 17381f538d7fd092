"""Hot numeric kernels with two interchangeable backends.

``numba`` compiles the per-vehicle loops with ``@njit``; ``numpy`` is a pure
numpy path that vectorises across lanes instead.  The backend is chosen once,
at import, from the ``VCLTSC_KERNELS`` environment variable:

* ``auto`` (default): numba when importable, otherwise numpy
* ``numba``: numba, raising ImportError if it is missing
* ``numpy``: numpy only

Both backends produce identical results up to floating point summation order;
``tests/test_kernels.py`` checks them against each other.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

from . import _numpy

ENV_FLAG = "VCLTSC_KERNELS"

_KERNEL_NAMES = ("follow_step", "encode_cells")


def _load(name: str) -> SimpleNamespace:
    if name == "numpy":
        mod = _numpy
    elif name == "numba":
        from . import _numba as mod  # noqa: F811  (ImportError propagates)
    else:
        raise ValueError(f"unknown kernel backend {name!r} (expected numba|numpy|auto)")
    return SimpleNamespace(name=name, **{k: getattr(mod, k) for k in _KERNEL_NAMES})


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        _load("numba")
    except ImportError:
        pass
    else:
        names.insert(0, "numba")
    return names


def get_backend(name: str | None = None) -> SimpleNamespace:
    """Return the kernel namespace for ``name`` (or the env-selected default)."""
    if name is None:
        name = os.environ.get(ENV_FLAG, "auto").strip().lower() or "auto"
    if name == "auto":
        try:
            return _load("numba")
        except ImportError:
            return _load("numpy")
    return _load(name)


_active = get_backend()
BACKEND: str = _active.name
follow_step = _active.follow_step
encode_cells = _active.encode_cells

__all__ = ["BACKEND", "ENV_FLAG", "available_backends", "encode_cells", "follow_step", "get_backend"]
