"""Select the compiled kernels when importable, the numpy ones otherwise.

Set ``LRO_BACKEND=python`` to force the fallback (``compiled`` makes a
missing extension an import error instead of a silent downgrade).
"""

from __future__ import annotations

import os

from . import _fallback

_choice = os.environ.get("LRO_BACKEND", "auto").strip().lower()

if _choice == "python":
    _impl = _fallback
    NAME = "python"
else:
    try:
        from . import _kernels as _impl
        NAME = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _fallback
        NAME = "python"

fit_order_restricted = _impl.fit_order_restricted
power_divergence_stats = _impl.power_divergence_stats
analyze_batch = _impl.analyze_batch
chi2_sf = _impl.chi2_sf
chibar_sf = _impl.chibar_sf
norm_cdf = _impl.norm_cdf

STATUS_OK = _fallback.STATUS_OK
STATUS_MAX_ITER = _fallback.STATUS_MAX_ITER
STATUS_NUMERICAL = _fallback.STATUS_NUMERICAL
