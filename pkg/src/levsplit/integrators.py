"""One-step integrators for autonomous Hamiltonian systems.

All steppers are pure functions ``(model, state, h, ...) -> result``. The
splitting schemes compose the two shift maps

    A: q <- q + h * dH/dp        (p unchanged)
    B: p <- p - h * dH/dq        (q unchanged)

For a separable Hamiltonian the shifts are exact sub-flows and the
velocity-Verlet composition B(h/2) A(h) B(h/2) is explicit. For a coupled
Hamiltonian the gradient inside each shift depends on the variable being
shifted; :func:`verlet_step` freezes that argument at the previous iterate and
repeats the sweep until successive end states agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from levsplit.errors import MaxIterationsError, NotSeparableError, SingularityError, SingularJacobianError
from levsplit.hamiltonian import DOF, HamiltonianModel, PhaseState

INIT_CHOICES = ("previous-step", "explicit-euler", "rk4")
FORMS = ("VV", "PV")


@dataclass(frozen=True)
class IterationConfig:
    """Settings of the fixed-point loop inside the iterative schemes.

    Attributes:
        max_iters: Upper bound on sweeps per time step.
        tol: Stop once max(|p_i - p_{i-1}|, |q_i - q_{i-1}|) <= tol.
        init: Source of the zeroth iterate: the state at the start of the step,
            an explicit Euler predictor, or a classic RK4 predictor.
        series_terms: Terms kept in the exponential series of each shift.
            With frozen gradients the series terminates after the linear term,
            so values above 1 give the same result.
    """

    max_iters: int = 4
    tol: float = 1e-4
    init: str = "previous-step"
    series_terms: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.init not in INIT_CHOICES:
            raise ValueError(f"init must be one of {INIT_CHOICES}, got {self.init!r}")
        if self.series_terms < 1:
            raise ValueError(f"series_terms must be >= 1, got {self.series_terms}")


@dataclass(frozen=True, eq=False)
class StepReport:
    new_state: PhaseState
    iterations_used: int
    final_residual: float


class SplittingOperator:
    """The A (coordinate) or B (momentum) shift of a Hamiltonian splitting.

    ``rate`` evaluates the shift direction at a point, ``apply`` moves the
    state along a given direction, and calling the operator does both, with
    the gradient taken at ``at`` when supplied and at (q, p) otherwise.
    """

    def __init__(self, kind: str):
        if kind not in ("A", "B"):
            raise ValueError(f"kind must be 'A' or 'B', got {kind!r}")
        self.kind = kind

    def __repr__(self):
        return f"SplittingOperator({self.kind!r})"

    def rate(self, model: HamiltonianModel, q, p) -> np.ndarray:
        if self.kind == "A":
            return model.dH_dp(q, p)
        return -model.dH_dq(q, p)

    def apply(self, q, p, h: float, rate) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "A":
            return q + h * rate, p
        return q, p + h * rate

    def __call__(self, model, q, p, h, at=None):
        eq, ep = (q, p) if at is None else at
        return self.apply(q, p, h, self.rate(model, eq, ep))


A_SHIFT = SplittingOperator("A")
B_SHIFT = SplittingOperator("B")


def _euler(model, q, p, h):
    v, f = model.vector_field(q, p)
    return q + h * v, p + h * f


def _rk4(model, q, p, h):
    v1, f1 = model.vector_field(q, p)
    v2, f2 = model.vector_field(q + 0.5 * h * v1, p + 0.5 * h * f1)
    v3, f3 = model.vector_field(q + 0.5 * h * v2, p + 0.5 * h * f2)
    v4, f4 = model.vector_field(q + h * v3, p + h * f3)
    return (
        q + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4),
        p + (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4),
    )


def euler_step(model: HamiltonianModel, state: PhaseState, h: float) -> PhaseState:
    """One explicit Euler step."""
    q, p = _euler(model, state.q, state.p, h)
    return PhaseState(q, p, state.t + h)


def rk4_step(model: HamiltonianModel, state: PhaseState, h: float) -> PhaseState:
    """One step of the classic four-stage Runge-Kutta method."""
    q, p = _rk4(model, state.q, state.p, h)
    return PhaseState(q, p, state.t + h)


def verlet_separable_step(model: HamiltonianModel, state: PhaseState, h: float) -> PhaseState:
    """Explicit kick-drift-kick step; exact composition of the shifts for separable H."""
    if not model.separable:
        raise NotSeparableError(f"{model!r} is not separable; use verlet_step")
    q0, p0 = state.q, state.p
    _, p_half = B_SHIFT(model, q0, p0, 0.5 * h)
    q1, _ = A_SHIFT(model, q0, p_half, h)
    _, p1 = B_SHIFT(model, q1, p_half, 0.5 * h)
    return PhaseState(q1, p1, state.t + h)


# A sweep maps the start point and a guess for the implicit stage values to a
# new end point and updated guess. VV guesses (p_half, q_end); PV guesses
# (q_half, p_end).

def _sweep_vv(model, q0, p0, h, guess):
    p_half_prev, q1_prev = guess
    _, p_half = B_SHIFT(model, q0, p0, 0.5 * h, at=(q0, p_half_prev))
    v = 0.5 * (A_SHIFT.rate(model, q0, p_half) + A_SHIFT.rate(model, q1_prev, p_half))
    q1, _ = A_SHIFT.apply(q0, p_half, h, v)
    _, p1 = B_SHIFT(model, q1, p_half, 0.5 * h)
    return q1, p1, (p_half, q1)


def _sweep_pv(model, q0, p0, h, guess):
    q_half_prev, p1_prev = guess
    q_half, _ = A_SHIFT(model, q0, p0, 0.5 * h, at=(q_half_prev, p0))
    f = 0.5 * (B_SHIFT.rate(model, q_half, p0) + B_SHIFT.rate(model, q_half, p1_prev))
    _, p1 = B_SHIFT.apply(q_half, p0, h, f)
    q1, _ = A_SHIFT(model, q_half, p1, 0.5 * h)
    return q1, p1, (q_half, p1)


_SWEEPS = {"VV": _sweep_vv, "PV": _sweep_pv}


def _initial_guess(model, form, q0, p0, h, init):
    """Zeroth iterate: (stage guess, end-point guess)."""
    if init == "previous-step":
        qe, pe = q0, p0
    elif init == "explicit-euler":
        qe, pe = _euler(model, q0, p0, h)
    else:
        qe, pe = _rk4(model, q0, p0, h)
    if init == "previous-step":
        stage = (p0, q0) if form == "VV" else (q0, p0)
    elif form == "VV":
        stage = (0.5 * (p0 + pe), qe)
    else:
        stage = (0.5 * (q0 + qe), pe)
    return stage, (qe, pe)


def _residual(q1, p1, q_prev, p_prev) -> float:
    return max(float(np.linalg.norm(p1 - p_prev)), float(np.linalg.norm(q1 - q_prev)))


def _check_form(form):
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")


def verlet_step(model: HamiltonianModel, state: PhaseState, h: float,
                cfg: IterationConfig = IterationConfig(), form: str = "VV") -> StepReport:
    """Iterative Verlet step for a possibly non-separable Hamiltonian.

    Each sweep applies B(h/2) A(h) B(h/2) (or A(h/2) B(h) A(h/2) for
    ``form="PV"``) with the implicit gradient arguments taken from the
    previous sweep. The fixed point is the symmetric, symplectic
    generalized leapfrog; for separable H a single sweep already lands on it.

    Non-convergence within ``cfg.max_iters`` sweeps is not an error; inspect
    the returned residual.
    """
    _check_form(form)
    sweep = _SWEEPS[form]
    q0, p0 = state.q, state.p
    model.check_state(q0)
    guess, (q_prev, p_prev) = _initial_guess(model, form, q0, p0, h, cfg.init)
    for i in range(1, cfg.max_iters + 1):
        q1, p1, guess = sweep(model, q0, p0, h, guess)
        residual = _residual(q1, p1, q_prev, p_prev)
        if residual <= cfg.tol:
            break
        q_prev, p_prev = q1, p1
    return StepReport(PhaseState(q1, p1, state.t + h), i, residual)


@dataclass(frozen=True, eq=False)
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norms: list


def forward_difference_jacobian(F: Callable, x: np.ndarray, fx: np.ndarray, rel_step: float = 1e-7) -> np.ndarray:
    """Jacobian of F at x by forward differences with step rel_step * max(1, |x_j|)."""
    jac = np.empty((fx.size, x.size))
    for j in range(x.size):
        xp = x.copy()
        xp[j] += rel_step * max(1.0, abs(x[j]))
        jac[:, j] = (F(xp) - fx) / (xp[j] - x[j])
    return jac


def _safe_eval(F, x):
    try:
        fx = F(x)
    except SingularityError:
        return None
    return fx if np.isfinite(fx).all() else None


def newton_solve(F: Callable, x0, tol: float = 1e-4, max_iter: int = 50,
                 jacobian: Callable | None = None, max_halvings: int = 30) -> NewtonResult:
    """Damped Newton iteration for F(x) = 0 with a halving line search.

    Stops when the Euclidean norm of F drops to ``tol``. The Jacobian is
    formed by forward differences unless ``jacobian`` is given.

    Raises:
        SingularJacobianError: if the linear system cannot be solved.
        MaxIterationsError: if ``max_iter`` updates do not reach ``tol``.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    fx = np.asarray(F(x), dtype=float).reshape(-1)
    norm = float(np.linalg.norm(fx))
    history = [norm]
    iterations = 0
    while norm > tol:
        if iterations >= max_iter:
            raise MaxIterationsError(iterations, norm)
        jac = jacobian(x) if jacobian is not None else forward_difference_jacobian(F, x, fx)
        try:
            dx = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(str(exc)) from None
        if not np.isfinite(dx).all():
            raise SingularJacobianError("Newton update is not finite")
        lam = 1.0
        for _ in range(max_halvings):
            x_try = x + lam * dx
            f_try = _safe_eval(F, x_try)
            if f_try is not None:
                n_try = float(np.linalg.norm(f_try))
                if n_try <= (1.0 - 1e-4 * lam) * norm:
                    break
            lam *= 0.5
        else:
            # no sufficient decrease along dx; take the full step and let the
            # iteration budget decide
            x_try = x + dx
            f_try = np.asarray(F(x_try), dtype=float)
            n_try = float(np.linalg.norm(f_try))
        x, fx, norm = x_try, f_try, n_try
        iterations += 1
        history.append(norm)
    return NewtonResult(x, iterations, history)


def implicit_midpoint_residual(model: HamiltonianModel, state: PhaseState, h: float) -> Callable:
    """Residual F(x) = (x - x_n)/h - f((x_n + x)/2) of the implicit midpoint rule.

    x stacks (q, p) at the new time level and f = (dH/dp, -dH/dq).
    """
    xn = state.as_vector()

    def F(x):
        mid = 0.5 * (xn + x)
        qm, pm = mid[:DOF], mid[DOF:]
        rate = (x - xn) / h
        rate[:DOF] -= model.dH_dp(qm, pm)
        rate[DOF:] += model.dH_dq(qm, pm)
        return rate

    return F


def newton_implicit_step(model: HamiltonianModel, state: PhaseState, h: float,
                         tol: float = 1e-4, max_iter: int = 50) -> PhaseState:
    """Implicit midpoint step solved by damped Newton on the 12x12 system."""
    if h == 0:
        return state
    F = implicit_midpoint_residual(model, state, h)
    q_pred, p_pred = _euler(model, state.q, state.p, h)
    result = newton_solve(F, np.concatenate([q_pred, p_pred]), tol=tol, max_iter=max_iter)
    return PhaseState.from_vector(result.x, state.t + h)
