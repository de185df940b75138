"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension is preferred when importable; set PACKMAP_PURE_PYTHON=1
to force the fallback. ``IMPLEMENTATION`` names the active one.
"""

import os

if os.environ.get("PACKMAP_PURE_PYTHON"):
    from packmap.kernels.pure import (
        integrate_rays,
        mean_log_prob,
        raycast,
        score_offsets_bilinear,
        score_offsets_nearest,
    )

    IMPLEMENTATION = "pure"
else:
    try:
        from packmap.kernels._core import (  # type: ignore[no-redef]
            integrate_rays,
            mean_log_prob,
            raycast,
            score_offsets_bilinear,
            score_offsets_nearest,
        )

        IMPLEMENTATION = "cython"
    except ImportError:
        from packmap.kernels.pure import (  # type: ignore[no-redef]
            integrate_rays,
            mean_log_prob,
            raycast,
            score_offsets_bilinear,
            score_offsets_nearest,
        )

        IMPLEMENTATION = "pure"

__all__ = [
    "IMPLEMENTATION",
    "integrate_rays",
    "mean_log_prob",
    "raycast",
    "score_offsets_bilinear",
    "score_offsets_nearest",
]
