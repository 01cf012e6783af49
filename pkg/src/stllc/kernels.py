"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise the numpy
implementations in ``_pykernels`` are used. Setting ``STLLC_PURE_PYTHON=1``
forces the fallback.
"""
import os

from . import _pykernels

if os.environ.get("STLLC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

pixel_votes = _impl.pixel_votes
box_sums = _impl.box_sums
lasso_solve = _impl.lasso_solve
quantize = _pykernels.quantize


def compiled():
    """Return the compiled module, or None when it is unavailable."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
