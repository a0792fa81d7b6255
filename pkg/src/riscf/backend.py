"""Kernel backend selection.

The hot numeric kernels (end-to-end channel assembly, combining SINR,
network forward/backward, optimizer step) exist twice: a Cython extension
(``riscf._kernels``) and a pure-numpy fallback (``riscf._kernels_py``).
The compiled one is picked at import when available; ``set_backend`` swaps
at runtime, which the equivalence tests and the benchmark rely on.
"""

from __future__ import annotations

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]

    _BACKENDS["compiled"] = _compiled
except ImportError:
    _compiled = None

_active_name = "compiled" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend() -> str:
    return _active_name


def set_backend(name: str) -> None:
    global _active_name
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    _active_name = name


def kernels():
    """The active kernel module."""
    return _BACKENDS[_active_name]
