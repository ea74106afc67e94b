"""Selects the relaxation kernel at import time.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``HMAPLAB_PURE_PYTHON`` is set to a non-empty value, the
numpy fallback is used. ``BACKEND`` names the active choice.
"""

import logging
import os
import warnings

from . import _fallback

logger = logging.getLogger(__name__)

if os.environ.get("HMAPLAB_PURE_PYTHON"):
    relax = _fallback.relax
    BACKEND = "python"
else:
    try:
        from ._kernels import relax
        BACKEND = "cython"
    except ImportError:
        warnings.warn("compiled kernels unavailable; using the numpy fallback", RuntimeWarning, stacklevel=2)
        relax = _fallback.relax
        BACKEND = "python"

python_relax = _fallback.relax
