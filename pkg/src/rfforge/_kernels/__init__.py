"""Backend selection for the hot inner loops.

The compiled extension is preferred when importable; RF_FORGE_BACKEND forces
the choice ("fast" or "pure"). Both backends are bit-identical by
construction, so selection never changes numeric results.
"""

import os

_requested = os.environ.get("RF_FORGE_BACKEND", "auto").strip().lower()

if _requested in ("", "auto"):
    try:
        from . import _fast as _impl
    except ImportError:
        from . import pure as _impl
elif _requested == "fast":
    from . import _fast as _impl
elif _requested == "pure":
    from . import pure as _impl
else:
    raise ImportError(
        f"RF_FORGE_BACKEND={_requested!r} not recognized; use 'auto', 'fast' or 'pure'"
    )

BACKEND = _impl.NAME

best_split_column = _impl.best_split_column
svr_select = _impl.svr_select
shap_tree_sample = _impl.shap_tree_sample
