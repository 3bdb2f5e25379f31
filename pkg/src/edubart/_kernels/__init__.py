"""Hot numeric kernels: compiled extension if available, numpy fallback otherwise.

Both backends implement the same four functions over the packed tree-array
layout (see `_fallback` for the layout contract) and produce bit-identical
results; the compiled one is just faster. Set ``EDUBART_PURE=1`` to force the
fallback, e.g. to benchmark or debug.
"""

import os

from . import _fallback

if os.environ.get("EDUBART_PURE"):
    _impl = _fallback
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"

route_rows = _impl.route_rows
leaf_sums = _impl.leaf_sums
forest_fit = _impl.forest_fit
gini_best_split = _impl.gini_best_split

__all__ = [
    "BACKEND",
    "route_rows",
    "leaf_sums",
    "forest_fit",
    "gini_best_split",
]
