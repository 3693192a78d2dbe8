"""Hot per-pixel kernels: compiled extension when available, NumPy otherwise.

The backend is chosen once at import.  Set ``PATTERNFLOW_KERNELS`` to
``native`` or ``numpy`` to force one (``native`` raises if the extension was
not built); the default ``auto`` prefers the extension and falls back
silently.  ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import _numpy

_requested = os.environ.get("PATTERNFLOW_KERNELS", "auto").lower()
if _requested not in ("auto", "native", "numpy"):
    raise ImportError(
        f"PATTERNFLOW_KERNELS must be auto, native or numpy, got {_requested!r}")

_impl = None
if _requested in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "native":
            raise
if _impl is None:
    _impl = _numpy

BACKEND = "numpy" if _impl is _numpy else "native"

bilinear_sample = _impl.bilinear_sample
warp_pattern = _impl.warp_pattern
photometric_term = _impl.photometric_term
sparse_l1_term = _impl.sparse_l1_term
tv_term = _impl.tv_term
quad_smooth_term = _impl.quad_smooth_term
splat_add = _impl.splat_add


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        from . import _native  # noqa: F401
        names.append("native")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the kernel module for `name` ("numpy" or "native")."""
    if name == "numpy":
        return _numpy
    if name == "native":
        from . import _native
        return _native
    raise ValueError(f"unknown kernel backend {name!r}")
