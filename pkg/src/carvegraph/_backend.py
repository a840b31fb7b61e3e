"""Kernel backend selection.

The compiled extension is used when it imports; ``CARVEGRAPH_BACKEND=python``
forces the numpy fallback.
"""

from __future__ import annotations

import contextlib
import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def _initial():
    want = os.environ.get("CARVEGRAPH_BACKEND", "").strip().lower()
    if want:
        if want not in ("python", "compiled"):
            raise RuntimeError(f"CARVEGRAPH_BACKEND must be 'python' or 'compiled', got {want!r}")
        if want not in _BACKENDS:
            raise RuntimeError("CARVEGRAPH_BACKEND=compiled but the extension is not built")
        return _BACKENDS[want]
    if _compiled is None:
        log.warning("compiled kernels unavailable, using the pure-Python fallback")
        return _fallback
    return _compiled


kernels = _initial()


def available() -> list[str]:
    return sorted(_BACKENDS)


def name() -> str:
    return kernels.BACKEND


def set_backend(which: str) -> None:
    global kernels
    if which not in _BACKENDS:
        raise ValueError(f"backend {which!r} not available (have {available()})")
    kernels = _BACKENDS[which]


@contextlib.contextmanager
def use_backend(which: str):
    global kernels
    prev = kernels
    set_backend(which)
    try:
        yield kernels
    finally:
        kernels = prev
