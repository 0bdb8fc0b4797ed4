"""Selection of the numeric kernel backend.

The hot inner loops (convolutions, pooling, histogram accumulation, peak
suppression, tree traversal) exist twice: a numba-jitted implementation and
a pure-numpy fallback. The environment variable ``HOLTERBEAT_BACKEND``
chooses between them:

* ``auto`` (default) - numba when it imports, numpy otherwise
* ``numba``          - require numba, fail loudly if missing
* ``numpy``          - force the pure-numpy path

Both paths are deterministic; they may differ in the last few ulps because
BLAS and the jitted loops do not sum in the same order.
"""

import os

ENV_VAR = "HOLTERBEAT_BACKEND"
_CHOICES = ("auto", "numba", "numpy")


def requested_backend() -> str:
    value = os.environ.get(ENV_VAR, "auto").strip().lower()
    if value not in _CHOICES:
        raise ValueError(
            f"{ENV_VAR}={value!r} is not one of {', '.join(_CHOICES)}"
        )
    return value


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend() -> str:
    """Return the backend name that will actually be used."""
    choice = requested_backend()
    if choice == "numpy":
        return "numpy"
    if numba_available():
        return "numba"
    if choice == "numba":
        raise ImportError(f"{ENV_VAR}=numba but numba is not importable")
    return "numpy"
