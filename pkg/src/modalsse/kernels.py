"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``MODALSSE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

_BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    _BACKENDS["cython"] = _ckernels


def available():
    return sorted(_BACKENDS)


def get(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available()}") from None


if os.environ.get("MODALSSE_PURE_PYTHON") or _ckernels is None:
    active = _pykernels
else:
    active = _ckernels

BACKEND = active.NAME
