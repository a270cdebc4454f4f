"""Phase-space types and Hamiltonian models.

Two models are provided: the nondimensional Levitron spinning top in the
field of a ring dipole, and a separable harmonic oscillator whose exact
solution serves as a test oracle for the integrators.

Coordinates are q = (X, Y, Z, theta, psi, phi) with conjugate momenta
p1..p6. Lengths are in units of the base-magnet radius and time in units of
sqrt(R/g).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from levsplit import _kernels
from levsplit.errors import NoEquilibriumError, SingularityError

DOF = 6


def _frozen_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (DOF,):
        raise ValueError(f"{name} must have shape ({DOF},), got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PhaseState:
    """A point (q, p) of the 12-dimensional phase space at time t."""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen_vector(self.q, "q"))
        object.__setattr__(self, "p", _frozen_vector(self.p, "p"))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_vector(cls, x: np.ndarray, t: float = 0.0) -> PhaseState:
        """Build a state from the stacked vector (q1..q6, p1..p6)."""
        return cls(x[:DOF], x[DOF:], t)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.q).all() and np.isfinite(self.p).all() and math.isfinite(self.t))

    def replace(self, q=None, p=None, t=None) -> PhaseState:
        return PhaseState(
            self.q if q is None else q,
            self.p if p is None else p,
            self.t if t is None else t,
        )

    def __repr__(self):
        return f"PhaseState(q={self.q.tolist()}, p={self.p.tolist()}, t={self.t!r})"


@dataclass(frozen=True)
class LevitronParams:
    """Nondimensional constants of the Levitron model.

    Attributes:
        a: Transverse moment of inertia.
        c: Axial moment of inertia.
        M: Ratio of magnetic to gravitational energy.
        sin_guard: Smallest admissible |sin q4|.
    """

    a: float = 1.0
    c: float = 1.0
    M: float = 0.0
    sin_guard: float = 1e-8

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.M >= 0:
            raise ValueError(f"M must be non-negative, got {self.M}")
        if not 0 < self.sin_guard < 1:
            raise ValueError(f"sin_guard must lie in (0, 1), got {self.sin_guard}")


@dataclass(frozen=True, eq=False)
class PsiDerivatives:
    """Value, gradient and Hessian of the ring-dipole potential at one point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray = field(repr=False)


def psi(pos) -> PsiDerivatives:
    """Evaluate the ring-dipole potential and its analytic derivatives.

    Args:
        pos: Nondimensional position (X, Y, Z).

    Returns:
        The potential with its gradient and (exactly symmetric) Hessian.
    """
    x, y, z = (float(v) for v in pos)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise ValueError(f"position must be finite, got {(x, y, z)}")
    grad = _kernels.psi_grad(x, y, z)
    hess = _kernels.psi_hess(x, y, z)
    grad.flags.writeable = False
    hess.flags.writeable = False
    return PsiDerivatives(float(_kernels.psi_value(x, y, z)), grad, hess)


class HamiltonianModel(ABC):
    """Energy and canonical gradients of an autonomous Hamiltonian H(q, p).

    Methods take the coordinate and momentum arrays separately so that
    integrators can evaluate intermediate stage points without building
    state objects.
    """

    #: True when dH/dq depends only on q and dH/dp only on p.
    separable: bool = False

    @abstractmethod
    def energy(self, q: np.ndarray, p: np.ndarray) -> float: ...

    @abstractmethod
    def dH_dp(self, q: np.ndarray, p: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def dH_dq(self, q: np.ndarray, p: np.ndarray) -> np.ndarray: ...

    def vector_field(self, q: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (dq/dt, dp/dt) = (dH/dp, -dH/dq)."""
        return self.dH_dp(q, p), -self.dH_dq(q, p)

    def check_state(self, q: np.ndarray) -> None:
        """Raise if q lies outside the model's admissible region."""

    def state_energy(self, state: PhaseState) -> float:
        return self.energy(state.q, state.p)


class LevitronModel(HamiltonianModel):
    """Reduced Hamiltonian of a magnetic top above a ring-dipole base magnet.

    H = 1/2 (p1^2 + p2^2 + p3^2 + p4^2/a + (p5 - p6 cos q4)^2 / (a sin^2 q4) + p6^2/c)
        - M [sin q4 (cos q5 dPsi/dX + sin q5 dPsi/dY) + cos q4 dPsi/dZ] + q3

    ``gravity`` scales the final q3 term. It exists so tests can switch the
    potential off; experiments leave it at 1.
    """

    separable = False

    def __init__(self, params: LevitronParams, gravity: float = 1.0):
        self.params = params
        self.gravity = float(gravity)
        self._a = float(params.a)
        self._c = float(params.c)
        self._m = float(params.M)
        self._guard = float(params.sin_guard)

    def __repr__(self):
        return f"LevitronModel({self.params!r}, gravity={self.gravity!r})"

    def check_state(self, q):
        s = math.sin(q[3])
        if abs(s) < self._guard:
            raise SingularityError(s, self._guard)

    def energy(self, q, p):
        self.check_state(q)
        return float(_kernels.levitron_energy(q, p, self._a, self._c, self._m, self.gravity))

    def dH_dp(self, q, p):
        self.check_state(q)
        return _kernels.levitron_dh_dp(q, p, self._a, self._c)

    def dH_dq(self, q, p):
        self.check_state(q)
        return _kernels.levitron_dh_dq(q, p, self._a, self._c, self._m, self.gravity)

    def vector_field(self, q, p):
        self.check_state(q)
        return (_kernels.levitron_dh_dp(q, p, self._a, self._c),
                -_kernels.levitron_dh_dq(q, p, self._a, self._c, self._m, self.gravity))


class OscillatorModel(HamiltonianModel):
    """Separable oscillator H = sum p_i^2 / (2 m) + k_i q_i^2 / 2.

    ``mass`` and ``stiffness`` may be scalars or per-axis 6-vectors.
    """

    separable = True

    def __init__(self, mass=1.0, stiffness=1.0):
        self.mass = np.broadcast_to(np.asarray(mass, dtype=float), (DOF,)).copy()
        self.stiffness = np.broadcast_to(np.asarray(stiffness, dtype=float), (DOF,)).copy()
        if not (self.mass > 0).all():
            raise ValueError("mass must be positive")
        if not (self.stiffness >= 0).all():
            raise ValueError("stiffness must be non-negative")
        self.omega = np.sqrt(self.stiffness / self.mass)

    def __repr__(self):
        return f"OscillatorModel(mass={self.mass.tolist()}, stiffness={self.stiffness.tolist()})"

    def energy(self, q, p):
        return float(np.sum(p * p / (2.0 * self.mass)) + 0.5 * np.sum(self.stiffness * q * q))

    def dH_dp(self, q, p):
        return p / self.mass

    def dH_dq(self, q, p):
        return self.stiffness * q

    def exact(self, state: PhaseState, t: float) -> PhaseState:
        """Exact flow of the oscillator from ``state`` to absolute time ``t``."""
        tau = t - state.t
        w = self.omega
        wt = w * tau
        cos, sin = np.cos(wt), np.sin(wt)
        free = w == 0.0
        safe_w = np.where(free, 1.0, w)
        q = np.where(free, state.q + state.p * tau / self.mass,
                     state.q * cos + state.p / (self.mass * safe_w) * sin)
        p = np.where(free, state.p, state.p * cos - state.q * self.mass * safe_w * sin)
        return PhaseState(q, p, t)


def levitron_energy(state: PhaseState, params: LevitronParams) -> float:
    return LevitronModel(params).energy(state.q, state.p)


def levitron_dH_dp(state: PhaseState, params: LevitronParams) -> np.ndarray:
    return LevitronModel(params).dH_dp(state.q, state.p)


def levitron_dH_dq(state: PhaseState, params: LevitronParams) -> np.ndarray:
    return LevitronModel(params).dH_dq(state.q, state.p)


def oscillator_energy(state: PhaseState, mass=1.0, stiffness=1.0) -> float:
    return OscillatorModel(mass, stiffness).energy(state.q, state.p)


def oscillator_dH_dp(state: PhaseState, mass=1.0, stiffness=1.0) -> np.ndarray:
    return OscillatorModel(mass, stiffness).dH_dp(state.q, state.p)


def oscillator_dH_dq(state: PhaseState, mass=1.0, stiffness=1.0) -> np.ndarray:
    return OscillatorModel(mass, stiffness).dH_dq(state.q, state.p)


def vertical_force(params: LevitronParams, z: float, tilt: float, azimuth: float = 0.0,
                   gravity: float = 1.0) -> float:
    """Vertical force -dH/dq3 on a motionless top at (0, 0, z)."""
    model = LevitronModel(params, gravity=gravity)
    q = np.array([0.0, 0.0, z, tilt, azimuth, 0.0])
    return float(-model.dH_dq(q, np.zeros(DOF))[2])


def calibrate_M(a: float, c: float, z_star: float, tilt: float, azimuth: float = 0.0,
                gravity: float = 1.0, sin_guard: float = 1e-8) -> float:
    """Magnetic strength that makes (0, 0, z_star) a vertical force balance.

    The vertical force is affine in M, so two evaluations give the root
    directly.

    Raises:
        NoEquilibriumError: if the magnetic term cannot hold the top up at
            this height and orientation.
    """
    if not z_star > 0:
        raise ValueError(f"z_star must be positive, got {z_star}")
    f0 = vertical_force(LevitronParams(a, c, 0.0, sin_guard), z_star, tilt, azimuth, gravity)
    f1 = vertical_force(LevitronParams(a, c, 1.0, sin_guard), z_star, tilt, azimuth, gravity)
    slope = f1 - f0
    if slope == 0.0:
        raise NoEquilibriumError(f"magnetic vertical force vanishes at z={z_star}, tilt={tilt}")
    m = -f0 / slope
    if m < 0:
        raise NoEquilibriumError(
            f"balancing gravity at z={z_star}, tilt={tilt} needs M={m:.6g} < 0; flip the tilt"
        )
    return m
