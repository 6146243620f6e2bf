"""Exception types shared across the package."""


class PolymrfError(Exception):
    """Base class for all library errors."""


class IdenticallyZero(PolymrfError):
    """Root finding was asked to isolate roots of the zero polynomial."""


class RankDeficient(PolymrfError):
    """A least-squares system is numerically singular."""


class InsufficientSamples(PolymrfError):
    """A piece of a piecewise fit received fewer samples than coefficients."""


class LengthMismatch(PolymrfError):
    """A moment sequence is too short for the requested matrix."""


class DegreeTooSmall(PolymrfError):
    """A cone description was requested below the minimum supported degree."""


class EigenFailure(PolymrfError):
    """The symmetric eigensolver did not converge within its sweep budget."""


class ShapeMismatch(PolymrfError):
    """Blockwise graph data does not match the expected field shape."""


class ConfigMismatch(PolymrfError):
    """Problem components disagree (label intervals, knot spans, ...)."""


class StepSizeViolation(PolymrfError):
    """Primal/dual step sizes violate the convergence condition."""


class Diverged(PolymrfError):
    """Solver iterates blew up beyond the divergence threshold."""


class InfeasibleDual(PolymrfError):
    """A dual variable failed its Lipschitz feasibility check."""


class DegenerateMass(PolymrfError):
    """All piece masses of a moment vector are numerically zero."""


class NotAChain(PolymrfError):
    """A chain-only oracle was invoked on a graph that is not a path."""


class Malformed(PolymrfError):
    """A binary input file violates its documented layout."""


class IoFailure(PolymrfError):
    """A file could not be read or written."""
