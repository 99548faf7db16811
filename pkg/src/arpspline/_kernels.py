"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
versions. Set ``ARPSPLINE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("ARPSPLINE_PURE_PYTHON"):
    try:
        from . import _kernels_ext as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py

bspline_values = _impl.bspline_values
ar_fill = _impl.ar_fill


def backends():
    """Return the available ``{name: module}`` kernel implementations."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels_ext
        out["compiled"] = _kernels_ext
    except ImportError:
        pass
    return out
