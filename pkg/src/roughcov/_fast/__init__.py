"""Backend selection for the moment-accumulation hot path.

The compiled Cython backend is preferred when its extension module built
successfully; otherwise the pure NumPy backend is used. Set the
environment variable ROUGHCOV_BACKEND to "numpy" or "cython" to force a
choice (``get_backend(None)`` consults it), or pass a backend name
explicitly to the estimation functions.
"""

import os

from . import _numpy

_BACKENDS = {"numpy": _numpy}

try:
    from . import _accel

    _BACKENDS["cython"] = _accel
except ImportError:
    _accel = None

DEFAULT_BACKEND = "cython" if "cython" in _BACKENDS else "numpy"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    """Resolve a backend module by name.

    ``None`` or ``"auto"`` consults ROUGHCOV_BACKEND and falls back to the
    compiled backend when available.
    """
    if name is None or name == "auto":
        name = os.environ.get("ROUGHCOV_BACKEND", "auto")
        if name == "auto":
            name = DEFAULT_BACKEND
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown backend {name!r}; available: {available_backends()}"
        )
    return _BACKENDS[name]
