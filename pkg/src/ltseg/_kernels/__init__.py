"""Kernel backend selection.

Two interchangeable implementations of the numeric hot loops live here: a
compiled extension (``_core``, built from ``_core.pyx``) and a pure-numpy
fallback (``_numpy``). The compiled one is preferred when it imported
cleanly; ``LTSEG_BACKEND=numpy|compiled`` overrides the choice at startup
and :func:`set_backend` switches it at runtime, mainly for benchmarks and
cross-checking tests.
"""

import os

from . import _numpy

PROB_FLOOR = _numpy.PROB_FLOOR

try:
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"numpy": _numpy}
if _core is not None:
    _BACKENDS["compiled"] = _core

_active_name = None
window_stack = None
softmax_xent_grad = None
count_confusion_into = None
levenshtein = None


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return _active_name


def set_backend(name):
    """Route the kernel entry points through the named backend."""
    global _active_name, window_stack, softmax_xent_grad
    global count_confusion_into, levenshtein
    if name not in _BACKENDS:
        raise ValueError(
            "unknown kernel backend %r (available: %s)"
            % (name, ", ".join(available_backends()))
        )
    mod = _BACKENDS[name]
    _active_name = name
    window_stack = mod.window_stack
    softmax_xent_grad = mod.softmax_xent_grad
    count_confusion_into = mod.count_confusion_into
    levenshtein = mod.levenshtein
    return name


def _initial_backend():
    requested = os.environ.get("LTSEG_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(
                "LTSEG_BACKEND=%r but that backend is unavailable (have: %s)"
                % (requested, ", ".join(available_backends()))
            )
        return requested
    return "compiled" if "compiled" in _BACKENDS else "numpy"


set_backend(_initial_backend())
