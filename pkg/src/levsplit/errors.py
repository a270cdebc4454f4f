"""Exception types raised by the integrators and the experiment harness."""


class LevsplitError(Exception):
    """Base class for all package errors."""


class SingularityError(LevsplitError):
    """Raised when |sin q4| falls below the configured guard.

    The reduced Hamiltonian carries 1/sin^2(q4) terms, so Euler-angle states
    with the spin axis too close to the vertical cannot be evaluated.
    """

    def __init__(self, sin_q4: float, guard: float, t: float | None = None):
        self.sin_q4 = sin_q4
        self.guard = guard
        self.t = t
        where = "" if t is None else f" at t={t:.17g}"
        super().__init__(f"|sin q4| = {abs(sin_q4):.3e} below guard {guard:.1e}{where}")


class NoEquilibriumError(LevsplitError):
    """Raised when no non-negative magnetic strength balances gravity."""


class NotSeparableError(LevsplitError):
    """Raised when a separable-only scheme receives a coupled model."""


class SingularJacobianError(LevsplitError):
    """Raised when the Newton linear system cannot be solved."""


class MaxIterationsError(LevsplitError):
    """Raised when Newton's method exhausts its iteration budget."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"Newton did not converge in {iterations} iterations (|F| = {residual:.3e})")


class DivergenceError(LevsplitError):
    """A simulation left the admissible region or produced non-finite values.

    Attributes:
        t: Time of the last step that was attempted.
        record: Trajectory samples collected before the failure, if any.
    """

    def __init__(self, message: str, t: float, record=None):
        self.t = t
        self.record = record
        super().__init__(f"{message} (t={t:.17g})")


class AlignmentError(LevsplitError):
    """Raised when a reference trajectory does not cover the run's sample times."""


class DegenerateRegressionError(LevsplitError):
    """Too few usable step sizes remain after discarding the roundoff floor."""
