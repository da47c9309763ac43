"""Kernel backend selection.

The compiled extension is preferred; ``COLORSHED_PURE=1`` forces the numpy
fallback (handy for comparing the two).
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("COLORSHED_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py

accumulate_pf = _impl.accumulate_pf
hue_count = _impl.hue_count
weighted_sum = _impl.weighted_sum
weighted_sum_rows = _impl.weighted_sum_rows

__all__ = [
    "BACKEND",
    "accumulate_pf",
    "hue_count",
    "weighted_sum",
    "weighted_sum_rows",
]
