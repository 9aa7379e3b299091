"""Stepping-kernel backend selection.

The compiled Cython kernel is preferred when importable; the pure-numpy
fallback is bit-identical, just slower.  Selection happens once at import:

* ``SSBURGERS_BACKEND=auto`` (default): extension if available, else numpy.
* ``SSBURGERS_BACKEND=ext``: require the extension, fail loudly otherwise.
* ``SSBURGERS_BACKEND=python``: force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernel_py

_choice = os.environ.get("SSBURGERS_BACKEND", "auto")
if _choice not in ("auto", "ext", "python"):
    raise RuntimeError(
        f"SSBURGERS_BACKEND must be auto, ext or python, got {_choice!r}"
    )

_impl = None
_name = "python"
if _choice in ("auto", "ext"):
    try:
        from . import _kernel as _ext

        _impl = _ext
        _name = "ext"
    except ImportError:
        if _choice == "ext":
            raise RuntimeError(
                "SSBURGERS_BACKEND=ext but the compiled kernel is not built; "
                "run `pip install -e . --no-build-isolation` or drop the override"
            ) from None
if _impl is None:
    _impl = _kernel_py


def active_backend() -> str:
    """Name of the kernel in use: 'ext' or 'python'."""
    return _name


def get_impl(name: str):
    """Fetch a specific kernel implementation (for cross-checks and benchmarks)."""
    if name == "python":
        return _kernel_py
    if name == "ext":
        from . import _kernel as ext

        return ext
    raise ValueError(f"unknown backend {name!r}")


em_block = _impl.em_block
drift = _impl.drift
g_values = _impl.g_values
