"""Exception hierarchy shared across the package.

Validation problems (bad shapes, out-of-range parameters, malformed
configs) derive from :class:`ValidationError`; numerical breakdowns from
:class:`NumericalError`; policies that fail a stability requirement raise
:class:`InstabilityError` or, inside a training run, the richer
:class:`StabilityViolationError`.
"""

from __future__ import annotations


class MemlqrError(Exception):
    """Base class for all package errors."""


class ValidationError(MemlqrError, ValueError):
    """Invalid argument, configuration, or file content."""


class ShapeError(ValidationError):
    """Matrix or vector dimensions do not agree."""


class BoundsViolationError(ValidationError):
    """Uncertainty parameter outside its declared interval."""


class InitializationError(ValidationError):
    """Initial policy fails to stabilize every system it must stabilize."""


class NumericalError(MemlqrError, RuntimeError):
    """A solver or line search broke down.

    ``residual`` carries the offending residual when one is available and
    ``last_iterate`` the most recent iterate of an iterative method.
    """

    def __init__(self, message, residual=None, last_iterate=None):
        super().__init__(message)
        self.residual = residual
        self.last_iterate = last_iterate


class StallError(NumericalError):
    """Step size underflowed before the iteration could make progress."""


class StabilizabilityError(NumericalError):
    """Riccati iteration failed to converge; the pair (A, B) is suspect."""


class InstabilityError(MemlqrError, RuntimeError):
    """A policy required to be stabilizing is not."""


class StabilityViolationError(MemlqrError, RuntimeError):
    """A training iterate destabilized a client system mid-run.

    Carries the outer iteration ``s`` and client index ``i`` where the
    violation was detected.
    """

    def __init__(self, message, s, i):
        super().__init__(message)
        self.s = s
        self.i = i
