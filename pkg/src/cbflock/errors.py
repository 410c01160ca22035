"""Exception types shared across the package."""


class CbflockError(Exception):
    """Base class for all package errors."""


class PreconditionError(CbflockError, ValueError):
    """A documented precondition or modelling assumption was violated."""


class DegenerateGeometryError(CbflockError, ValueError):
    """Coincident or parallel geometry where a formula divides by a vanishing quantity."""


class InfeasibleQPError(CbflockError, RuntimeError):
    """No candidate active set certifies the per-robot QP.

    Feasibility holds along valid trajectories (h_ij >= 0 at t=0 is
    forward-invariant), so this surfaces integration or state-corruption
    bugs rather than being handled silently.
    """


class NoCrossingError(CbflockError, RuntimeError):
    """A bracketed root search found no sign change (preconditions violated)."""


class NotCategoryAError(CbflockError, ValueError):
    """Three-robot rotation controller invoked on a non-equilateral contact pattern."""


class ScenarioFormatError(CbflockError, ValueError):
    """Scenario file failed strict validation; message carries the field path."""
