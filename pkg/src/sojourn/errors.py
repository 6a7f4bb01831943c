"""Failure modes shared across the package.

Hard errors are exceptions; boundary contamination is a warning because the
operations still return values, but experiment drivers escalate it to a
failure (see cli.run_delay).
"""


class SojournError(Exception):
    """Base class for package errors."""


class ConfigError(SojournError):
    """Malformed or inconsistent experiment configuration."""


class NonInteriorOrigin(SojournError):
    """The origin is not an interior point of the domain."""


class RayResolutionFailure(SojournError):
    """Ray scan could not resolve the domain's mu-intervals."""


class OriginSingularity(SojournError):
    """Linear symbol with a non-spherical domain is not regular at 0."""


class StepUnderflow(SojournError):
    """Requested flow step is too small to make progress."""


class StepBudgetExceeded(SojournError):
    """Flow integration exceeded its step budget."""


class QuadratureFailure(SojournError):
    """Adaptive quadrature failed (vanishing symbol inside the range)."""


class InterpolationOutOfBand(SojournError):
    """Flowed momenta left the resolved band of the grid."""


class WindowViolation(SojournError):
    """State carries mass outside the declared energy window."""


class EmptyWindow(SojournError):
    """Window filtering removed essentially all of the state's mass."""


class WraparoundDetected(SojournError):
    """Propagation drove the state into the periodic boundary."""


class NotConverged(SojournError):
    """Wave-operator horizon not converged (doubling it changes the result)."""


class TailTooFat(SojournError):
    """Estimated time-quadrature tail exceeds its budget."""


class NoConvergence(SojournError):
    """Radius extrapolation rejected: samples still moving beyond the fit."""


class NonHermitianResult(SojournError):
    """Expectation value of a symmetric operator came out complex."""


class SolverNotConverged(SojournError):
    """Iterative linear solve missed its residual target."""


class BoundaryContamination(UserWarning):
    """State amplitude in the outer box region above the hygiene threshold."""
