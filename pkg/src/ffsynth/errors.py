"""Exception hierarchy shared by all stages of the pipeline."""


class SynthError(Exception):
    """Base class for every error raised by ffsynth."""


class RangeError(SynthError, ValueError):
    """Argument outside the supported range (degree too large, x = 0, ...)."""


class ArgumentError(SynthError, ValueError):
    """Argument violates a precondition (|m| > l, quadrature too coarse, ...)."""


class QuadratureError(SynthError):
    """Adaptive quadrature failed to reach the requested accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class IllConditionedError(SynthError):
    """A harmonic degree would be amplified beyond the allowed cap."""

    def __init__(self, message, degree=None):
        super().__init__(message)
        self.degree = degree


class ConditionError(SynthError):
    """The denominator field falls below the condition floor.

    Callers should fall back to :func:`ffsynth.potential.perturb_source`.
    """

    def __init__(self, message, min_abs=None, location=None):
        super().__init__(message)
        self.min_abs = min_abs
        self.location = location


class PerturbationError(SynthError):
    """Zeroing h on the near-zero set did not lift min |psi| above delta/2."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class SolverError(SynthError):
    """The Lippmann-Schwinger solve did not converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class ConfigError(SynthError, ValueError):
    """Invalid configuration; ``problems`` lists each violated constraint."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
