"""Hot kernels with a compiled core and a NumPy fallback.

The compiled extension is preferred; set ``COMPCBF_PURE_PYTHON=1`` to force
the fallback.  ``BACKEND`` names the implementation in use.
"""
import os

from . import _pykernels

SAFETY = _pykernels.SAFETY
CONNECTIVITY = _pykernels.CONNECTIVITY

_compiled = None
if os.environ.get("COMPCBF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    BACKEND = "cython"
    pair_terms = _compiled.pair_terms
    project_halfspace_box = _compiled.project_halfspace_box
else:
    BACKEND = "python"
    pair_terms = _pykernels.pair_terms
    project_halfspace_box = _pykernels.project_halfspace_box


def implementations():
    """Map of available backend name to kernel module."""
    out = {"python": _pykernels}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
