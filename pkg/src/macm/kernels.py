"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``MACM_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy fallback is used. Both expose the same functions.
"""
import os

from . import _pykernels

_force_pure = os.environ.get("MACM_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "compiled" if _impl is not _pykernels else "python"

horner = _impl.horner
power_sums = _impl.power_sums
exclusive_products = _impl.exclusive_products
design_matrix = _impl.design_matrix
rank_auc = _impl.rank_auc

__all__ = [
    "BACKEND",
    "horner",
    "power_sums",
    "exclusive_products",
    "design_matrix",
    "rank_auc",
]
