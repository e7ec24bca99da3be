"""Kernel backend selection: numba-compiled loops or pure numpy.

The default is numba whenever it imports; set the environment variable
``COLDSTART_BACKEND`` to ``numpy`` (or ``numba``/``auto``) to override,
or call :func:`set_backend` at runtime.
"""

import os

ENV_VAR = "COLDSTART_BACKEND"
_CHOICES = ("auto", "numba", "numpy")


def _numba_importable():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _numba_importable()

_backend = None


def _resolve(choice):
    if choice not in _CHOICES:
        raise ValueError(f"unknown backend {choice!r}, expected one of {_CHOICES}")
    if choice == "numba" and not HAVE_NUMBA:
        raise RuntimeError("backend 'numba' requested but numba is not importable")
    if choice == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    return choice


def active_backend():
    """Return the backend in use: ``"numba"`` or ``"numpy"``."""
    global _backend
    if _backend is None:
        _backend = _resolve(os.environ.get(ENV_VAR, "auto").lower())
    return _backend


def set_backend(choice):
    """Force a backend (``"auto"``, ``"numba"`` or ``"numpy"``)."""
    global _backend
    _backend = _resolve(choice)
    return _backend
