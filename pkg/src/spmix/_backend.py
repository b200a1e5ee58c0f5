"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``SPMIX_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import contextlib
import os

from spmix import _fallback
from spmix.errors import UsageError

try:
    if os.environ.get("SPMIX_BACKEND", "").lower() in ("python", "numpy", "fallback"):
        raise ImportError("fallback forced by SPMIX_BACKEND")
    from spmix import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_state = {"impl": _compiled or _fallback, "threads": 1}


def available() -> list[str]:
    return sorted(_BACKENDS)


def name() -> str:
    return _state["impl"].NAME


def impl():
    return _state["impl"]


def threads() -> int:
    return _state["threads"]


def set_backend(which: str):
    if which not in _BACKENDS:
        raise UsageError(f"backend {which!r} not available (have {available()})")
    _state["impl"] = _BACKENDS[which]


def set_threads(k: int):
    _state["threads"] = max(1, int(k))


@contextlib.contextmanager
def use_backend(which: str):
    old = _state["impl"]
    set_backend(which)
    try:
        yield _state["impl"]
    finally:
        _state["impl"] = old
