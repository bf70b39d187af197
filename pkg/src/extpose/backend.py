"""Kernel backend selection: compiled extension when available, numpy otherwise.

Set ``EXTPOSE_BACKEND=python`` to force the numpy fallback (used by the
benchmark and the cross-backend equivalence tests).
"""

from __future__ import annotations

import os

from . import _purepy

if os.environ.get("EXTPOSE_BACKEND", "").lower() == "python":
    _impl = _purepy
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _purepy

BACKEND = _impl.BACKEND_NAME

propagate_batch = _impl.propagate_batch
propagate_state = _impl.propagate_state
integrate_delta = _impl.integrate_delta


def available_backends():
    """Names of importable kernel backends."""
    names = ["python"]
    try:
        from . import _native  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
