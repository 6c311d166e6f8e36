"""Select the compiled kernel core, falling back to numpy.

Set ``FRACINV_BACKEND=python`` to force the numpy implementation.
"""

import logging
import os

from . import _pycore

log = logging.getLogger(__name__)

_requested = os.environ.get("FRACINV_BACKEND", "auto").lower()

if _requested == "python":
    core = _pycore
    NAME = "python"
else:
    try:
        from . import _core as core  # type: ignore[attr-defined]

        NAME = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        log.debug("compiled core unavailable; using numpy fallback")
        core = _pycore
        NAME = "python"

series_eval = core.series_eval
history_convolve = core.history_convolve
l1_march = core.l1_march
picard_mode = core.picard_mode

CONVERGED = _pycore.CONVERGED
MAX_ITER = _pycore.MAX_ITER
DIVERGING = _pycore.DIVERGING

__all__ = [
    "NAME",
    "core",
    "series_eval",
    "history_convolve",
    "l1_march",
    "picard_mode",
    "CONVERGED",
    "MAX_ITER",
    "DIVERGING",
]
