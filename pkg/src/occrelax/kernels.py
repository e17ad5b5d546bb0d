"""Select the compiled simplex kernels when available.

Set ``OCCRELAX_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("OCCRELAX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

bland_price = _impl.bland_price
dantzig_price = _impl.dantzig_price
harris_ratio = _impl.harris_ratio
ratio_test = _impl.ratio_test
eta_update = _impl.eta_update

__all__ = ["BACKEND", "bland_price", "dantzig_price", "ratio_test", "harris_ratio", "eta_update"]
