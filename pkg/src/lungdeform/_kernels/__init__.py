"""Hot-kernel backend selection.

Prefers the compiled Cython extension when it was built; otherwise falls
back to the NumPy implementation. Set LUNGDEFORM_PURE=1 to force the
fallback (useful for debugging and for the backend benchmark).
"""

import os

from . import numpy_backend

if os.environ.get("LUNGDEFORM_PURE"):
    backend = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _native as backend

        BACKEND = "native"
    except ImportError:
        backend = numpy_backend
        BACKEND = "numpy"

gaussian_gram = backend.gaussian_gram
gaussian_cross = backend.gaussian_cross
column_crossings = backend.column_crossings


def available_backends():
    """Name -> module for every backend importable in this environment."""
    out = {"numpy": numpy_backend}
    try:
        from . import _native

        out["native"] = _native
    except ImportError:
        pass
    return out
