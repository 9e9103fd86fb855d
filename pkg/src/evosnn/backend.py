"""Kernel selection.

The compiled kernel is used when it imports; otherwise the pure-Python one.
``EVOSNN_BACKEND=python`` (or ``compiled``) forces a choice.
"""
from __future__ import annotations

import os
import warnings
from types import ModuleType

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

KERNELS: dict[str, ModuleType] = {"python": _pykernel}
if _ckernel is not None:
    KERNELS["compiled"] = _ckernel


def available() -> list[str]:
    return list(KERNELS)


def default_name() -> str:
    forced = os.environ.get("EVOSNN_BACKEND")
    if forced:
        if forced not in KERNELS:
            warnings.warn(f"EVOSNN_BACKEND={forced!r} unavailable, using {_best()}")
            return _best()
        return forced
    return _best()


def _best() -> str:
    return "compiled" if "compiled" in KERNELS else "python"


def get(name: str | ModuleType | None = None) -> ModuleType:
    if isinstance(name, ModuleType):
        return name
    name = name or default_name()
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available()}") from None
