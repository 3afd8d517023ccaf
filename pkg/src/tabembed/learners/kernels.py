"""Kernel selection: numba-accelerated by default, pure numpy on demand.

Set TABEMBED_NO_NUMBA=1 (or any value other than 0/empty) to force the
numpy fallback; `benchmarks/bench_kernels.py` compares the two paths.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_numpy

_ENV_FLAG = "TABEMBED_NO_NUMBA"

try:
    from . import _kernels_numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _kernels_numba = None
    HAS_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get(_ENV_FLAG, "") not in ("", "0")


def get_kernels(use_numba=None) -> ModuleType:
    """Return the kernel module for the requested path.

    `use_numba=None` picks the default: numba when importable and not
    disabled by the environment flag.
    """
    if use_numba is None:
        use_numba = HAS_NUMBA and not numba_disabled_by_env()
    if use_numba:
        if not HAS_NUMBA:
            raise ImportError("numba requested but not importable")
        return _kernels_numba
    return _kernels_numpy


def active_path() -> str:
    return "numba" if get_kernels() is _kernels_numba else "numpy"
