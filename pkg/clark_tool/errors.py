# -*- coding: utf-8 -*-
"""
Exception hierarchy for the Clark construction toolbox.

Every error raised on purpose by the package derives from `ClarkToolError`, so
callers (most importantly the command-line layer) can tell an expected,
diagnosable failure apart from a programming error. Errors that describe bad
input also derive from `ValueError`, matching how the rest of the code reports
invalid arguments.
"""


class ClarkToolError(Exception):
    """Base class for all errors raised by the toolbox."""


class ConfigError(ClarkToolError, ValueError):
    """A run configuration or precision setting violates its preconditions."""


class DomainError(ClarkToolError, ValueError):
    """An operation was applied outside its mathematical domain."""


class SchemaError(ClarkToolError, ValueError):
    """A saved state document is malformed or has the wrong version."""


class PoleError(ClarkToolError, ZeroDivisionError):
    """
    A rational function was evaluated at (or certifiably near) one of its poles.

    Attributes:
        index (int): 1-based index of the offending atom.
        limit: The finite limit value of the evaluated function at the atom,
            when one exists (for instance 1 for the inner function). None
            otherwise.
    """

    def __init__(self, index, limit=None):
        super().__init__(f"Evaluation point coincides with the pole of atom {index}.")
        self.index = index
        self.limit = limit


class PrecisionExhausted(ClarkToolError):
    """
    A verdict could not be certified at the available precision.

    Attributes:
        bits (int): The working precision at which the failure happened.
    """

    def __init__(self, message, bits=None):
        super().__init__(message)
        self.bits = bits


class TieBreak(PrecisionExhausted):
    """Two candidate distances could not be ordered with certainty."""


class AmbiguousMatch(ClarkToolError):
    """
    Zeros of two consecutive stages could not be put in correspondence.

    Attributes:
        resolvable (bool): True when more precision could settle the match,
            False when the inputs violate the matching precondition.
    """

    def __init__(self, message, resolvable=False):
        super().__init__(message)
        self.resolvable = resolvable


class NotAZero(ClarkToolError, ValueError):
    """The supplied point is certifiably not a zero of the bracket H_N."""


class SingularFrame(ClarkToolError):
    """The eigenvector frame matrix could not be certified invertible."""


class IterationCap(ClarkToolError):
    """A shrink-until-certified loop ran out of iterations."""


class DegenerateVector(ClarkToolError):
    """The vector defining the rank-one perturbation is degenerate."""


class QuadratureStall(ClarkToolError):
    """Circle quadrature did not stabilise before reaching the node cap."""


class NeedMoreStages(ClarkToolError):
    """
    The committed stages do not reach far enough for the requested bound.

    Attributes:
        required_stage (int): The first stage that would qualify.
    """

    def __init__(self, required_stage):
        super().__init__(
            f"No committed stage qualifies; construct at least {required_stage} stages."
        )
        self.required_stage = required_stage


class CertificateFailure(ClarkToolError):
    """
    A construction step ended with a certificate that does not pass.

    Attributes:
        stage (int): Stage index N at which the failure happened.
        certificate: The failing `Certificate` (may be None when the failure
            is a loop exhaustion rather than a single inequality).
    """

    def __init__(self, stage, certificate=None, message=None):
        if message is None:
            name = certificate.label if certificate is not None else "unknown"
            message = f"Stage {stage}: certificate '{name}' failed."
        super().__init__(message)
        self.stage = stage
        self.certificate = certificate
