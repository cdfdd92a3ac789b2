"""Backend selection for the chain kernel.

The compiled extension is used when it imports; setting the environment
variable ``FLATMC_PURE_PYTHON=1`` forces the pure-Python twin.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("FLATMC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def backend(name: str | None = None):
    """Kernel module by name ('cython' or 'python'); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels as _compiled  # type: ignore[attr-defined]
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
