"""Kernel backend selection.

The compiled extension (``_core``) is preferred when importable; the pure
NumPy backend (``pyref``) is the fallback and can be forced by setting
``EVSEL_PURE_KERNELS=1`` in the environment. Both expose the same
functions with the same semantics; ``BACKEND`` names the one in use.
"""

import os

_force_pure = os.environ.get("EVSEL_PURE_KERNELS", "").strip() not in ("", "0")

if _force_pure:
    from . import pyref as impl
else:
    try:
        from . import _core as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pyref as impl

BACKEND = impl.BACKEND_NAME

mean_over_rows = impl.mean_over_rows
sink_scores_layer = impl.sink_scores_layer
percentile_linear = impl.percentile_linear
weighted_moments = impl.weighted_moments
binary_closing = impl.binary_closing
largest_component_box = impl.largest_component_box
topn_inner = impl.topn_inner
