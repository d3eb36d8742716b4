"""Kernel backend selection.

The compiled extension is preferred; set ``TENDONSCORE_KERNELS=python`` to
force the numpy fallback. Both backends expose ``conv2d``, ``max_pool``,
``local_response_norm`` and ``bilinear_sample``.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return list(_BACKENDS)


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    if name is None:
        return active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}") from None


_requested = os.environ.get("TENDONSCORE_KERNELS", "").strip().lower()
if _requested in _BACKENDS:
    BACKEND = _requested
else:
    BACKEND = "cython" if _ckernels is not None else "python"
active = _BACKENDS[BACKEND]
