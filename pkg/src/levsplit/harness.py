"""Experiment driver: trajectories, reference comparison, order estimates, spin scans.

Everything here is batch-oriented. A :class:`RunConfig` fully determines a
run, so repeated runs produce byte-identical CSV files.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from levsplit.errors import AlignmentError, DegenerateRegressionError, DivergenceError, SingularityError
from levsplit.extrapolation import iterative_mpe_step, mpe_coefficients, mpe_step, verlet_kernel
from levsplit.hamiltonian import (
    DOF,
    HamiltonianModel,
    LevitronModel,
    LevitronParams,
    OscillatorModel,
    PhaseState,
    calibrate_M,
)
from levsplit.integrators import IterationConfig, euler_step, newton_implicit_step, rk4_step, verlet_step

log = logging.getLogger(__name__)

INTEGRATORS = ("euler", "rk4", "verlet-vv", "verlet-pv", "newton", "mpe", "iterative-mpe")

# Levitron experiment defaults. The inertia ratios are those of a small
# disk-shaped top over a base magnet about three times its radius. The spin is
# the middle of the stable window [0.6, 1.2] that
#   levsplit scan --p6-min 0 --p6-max 2 --samples 21 --dt 1e-2 --steps 10000
# reports for these values (rk4, 100 time units per sample).
EQUILIBRIUM_HEIGHT = 1.72
DEFAULT_TILT = 0.01
DEFAULT_SPIN = 0.9
DEFAULT_A = 0.05
DEFAULT_C = 0.1

CSV_COLUMNS = ["t"] + [f"q{i}" for i in range(1, 7)] + [f"p{i}" for i in range(1, 7)] + ["H"]


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def levitron_initial_state(spin: float = DEFAULT_SPIN, z: float = EQUILIBRIUM_HEIGHT,
                           tilt: float = DEFAULT_TILT, azimuth: float = 0.0) -> PhaseState:
    """Top at rest on the axis, spin axis tilted by ``tilt``, zero precession rate.

    Setting p5 = p6 cos q4 makes dq5/dt vanish and keeps the
    (p5 - p6 cos q4)^2 / sin^2 q4 term finite for small tilts.
    """
    return PhaseState([0.0, 0.0, z, tilt, azimuth, 0.0],
                      [0.0, 0.0, 0.0, 0.0, spin * math.cos(tilt), spin])


def with_spin(state: PhaseState, spin: float) -> PhaseState:
    """Replace the spin momentum p6, keeping the precession rate zero."""
    p = state.p.copy()
    p[5] = spin
    p[4] = spin * math.cos(state.q[3])
    return state.replace(p=p)


@dataclass(frozen=True)
class ModelConfig:
    """Which Hamiltonian to integrate.

    For the Levitron, ``M=None`` calibrates M so that the initial height and
    orientation balance gravity (see :func:`calibrate_M`).
    """

    kind: str = "levitron"
    a: float = DEFAULT_A
    c: float = DEFAULT_C
    M: float | None = None
    z_star: float = EQUILIBRIUM_HEIGHT
    mass: float = 1.0
    stiffness: float = 1.0

    def __post_init__(self):
        if self.kind not in ("levitron", "oscillator"):
            raise ValueError(f"unknown model {self.kind!r}")

    def resolve_M(self, tilt: float = DEFAULT_TILT, azimuth: float = 0.0) -> float:
        if self.M is not None:
            return float(self.M)
        return calibrate_M(self.a, self.c, self.z_star, tilt, azimuth)

    def build(self, initial: PhaseState | None = None) -> HamiltonianModel:
        if self.kind == "oscillator":
            return OscillatorModel(self.mass, self.stiffness)
        tilt, azimuth = (DEFAULT_TILT, 0.0) if initial is None else (initial.q[3], initial.q[4])
        return LevitronModel(LevitronParams(self.a, self.c, self.resolve_M(tilt, azimuth)))

    def default_state(self) -> PhaseState:
        if self.kind == "oscillator":
            return PhaseState([1.0, 0, 0, 0, 0, 0], np.zeros(DOF))
        return levitron_initial_state(z=self.z_star)


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one simulation run.

    Attributes:
        escape: A Levitron run diverges once the centre of mass is farther
            than this from its start.
        bound: Largest |q3(t) - q3(0)| for which a run counts as stable.
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    integrator: str = "rk4"
    order: int = 4
    h: float = 1e-3
    steps: int = 1000
    iteration: IterationConfig = field(default_factory=IterationConfig)
    initial_state: PhaseState | None = None
    stride: int = 1
    out: str | None = None
    ref: str | None = None
    escape: float = 1.0
    bound: float = 0.5

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.integrator in ("mpe", "iterative-mpe"):
            if self.order % 2 or not 2 <= self.order <= 16:
                raise ValueError(f"order must be even and in [2, 16], got {self.order}")

    @property
    def start(self) -> PhaseState:
        return self.initial_state if self.initial_state is not None else self.model.default_state()


Stepper = Callable[[PhaseState, float], PhaseState]


def make_stepper(model: HamiltonianModel, integrator: str, order: int = 4,
                 iteration: IterationConfig = IterationConfig()) -> Stepper:
    """Return ``step(state, h) -> state`` for a named integrator."""
    if integrator == "euler":
        return lambda s, h: euler_step(model, s, h)
    if integrator == "rk4":
        return lambda s, h: rk4_step(model, s, h)
    if integrator in ("verlet-vv", "verlet-pv"):
        form = integrator[-2:].upper()
        return lambda s, h: verlet_step(model, s, h, iteration, form).new_state
    if integrator == "newton":
        return lambda s, h: newton_implicit_step(model, s, h, tol=iteration.tol)
    table = mpe_coefficients(order // 2)
    if integrator == "mpe":
        kernel = verlet_kernel(model, iteration)
        return lambda s, h: mpe_step(kernel, s, h, table)
    if integrator == "iterative-mpe":
        return lambda s, h: iterative_mpe_step(model, s, h, table, iteration).new_state
    raise ValueError(f"unknown integrator {integrator!r}")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Sampled trajectory: times, coordinates, momenta and energy per sample."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    H: np.ndarray
    completed: bool = True

    def __len__(self):
        return len(self.t)

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.q[i], self.p[i], self.t[i])

    @property
    def final(self) -> PhaseState:
        return self.state(len(self) - 1)

    def rows(self):
        for i in range(len(self)):
            yield [self.t[i], *self.q[i], *self.p[i], self.H[i]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.rows():
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> TrajectoryRecord:
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader)
            if header != CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
        data = data.reshape(-1, len(CSV_COLUMNS))
        return cls(data[:, 0], data[:, 1:7], data[:, 7:13], data[:, 13])

    @classmethod
    def from_samples(cls, samples, completed=True) -> TrajectoryRecord:
        t = np.array([s[0] for s in samples], dtype=float)
        q = np.array([s[1] for s in samples], dtype=float).reshape(-1, DOF)
        p = np.array([s[2] for s in samples], dtype=float).reshape(-1, DOF)
        H = np.array([s[3] for s in samples], dtype=float)
        return cls(t, q, p, H, completed)


def run_simulation(config: RunConfig) -> TrajectoryRecord:
    """Advance ``config.steps`` steps of size ``config.h`` and sample every ``stride`` steps.

    The final step is always sampled. Writes the CSV when ``config.out`` is
    set, including the partial trajectory of a diverged run.

    Raises:
        DivergenceError: on a coordinate singularity, a non-finite state, or
            (Levitron only) when the top escapes farther than ``config.escape``.
    """
    start = config.start
    model = config.model.build(start)
    step = make_stepper(model, config.integrator, config.order, config.iteration)
    levitron = config.model.kind == "levitron"
    h = config.h
    t0 = start.t
    origin = start.q[:3].copy()

    samples = [(t0, start.q, start.p, model.energy(start.q, start.p))]
    state = start
    failure = None
    for n in range(1, config.steps + 1):
        t_n = t0 + n * h
        try:
            state = step(state, h)
            model.check_state(state.q)
        except SingularityError as exc:
            failure = f"coordinate singularity: {exc}"
        else:
            # time is n*h rather than an accumulated sum so sample times align across runs
            state = state.replace(t=t_n)
            if not state.is_finite():
                failure = "non-finite state"
            elif levitron and np.linalg.norm(state.q[:3] - origin) > config.escape:
                failure = f"top escaped beyond radius {config.escape}"
        if failure is not None:
            record = TrajectoryRecord.from_samples(samples, completed=False)
            if config.out:
                record.to_csv(config.out)
            log.info("run diverged at t=%g: %s", t_n, failure)
            raise DivergenceError(failure, t_n, record)
        if n % config.stride == 0 or n == config.steps:
            energy = model.energy(state.q, state.p)
            if not math.isfinite(energy):
                record = TrajectoryRecord.from_samples(samples, completed=False)
                raise DivergenceError("non-finite energy", t_n, record)
            samples.append((t_n, state.q, state.p, energy))
    record = TrajectoryRecord.from_samples(samples)
    if config.out:
        record.to_csv(config.out)
    return record


@dataclass(frozen=True, eq=False)
class ErrorSummary:
    """Centre-of-mass error of a run against a reference.

    ``state_err`` holds the full 12-component distance for information.
    """

    mean_error: float
    max_error: float
    t: np.ndarray
    err: np.ndarray
    state_err: np.ndarray
    stable: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,err\n")
            for t, e in zip(self.t, self.err):
                fh.write(f"{_fmt(t)},{_fmt(e)}\n")
            fh.write(f"# mean_error={_fmt(self.mean_error)}\n")
            fh.write(f"# max_error={_fmt(self.max_error)}\n")
            fh.write(f"# stable={str(self.stable).lower()}\n")


def align(run: TrajectoryRecord, ref: TrajectoryRecord, rtol: float = 1e-9) -> np.ndarray:
    """Indices into ``ref`` of the samples at the run's sample times."""
    idx = np.searchsorted(ref.t, run.t)
    out = np.empty(len(run), dtype=int)
    for i, (t, j) in enumerate(zip(run.t, idx)):
        tol = rtol * max(1.0, abs(t))
        candidates = [k for k in (j - 1, j) if 0 <= k < len(ref)]
        best = min(candidates, key=lambda k: abs(ref.t[k] - t), default=None)
        if best is None or abs(ref.t[best] - t) > tol:
            raise AlignmentError(f"reference has no sample at t={t!r}")
        out[i] = best
    return out


def stability_flag(run: TrajectoryRecord, bound: float = 0.5) -> bool:
    if not run.completed:
        return False
    return bool(np.max(np.abs(run.q[:, 2] - run.q[0, 2])) <= bound)


def compare_to_reference(run: TrajectoryRecord, ref: TrajectoryRecord, bound: float = 0.5) -> ErrorSummary:
    """Distance between the (q1, q2, q3) of ``run`` and ``ref`` at equal times."""
    idx = align(run, ref)
    err = np.linalg.norm(run.q[:, :3] - ref.q[idx, :3], axis=1)
    full = np.sqrt(np.sum((run.q - ref.q[idx]) ** 2, axis=1) + np.sum((run.p - ref.p[idx]) ** 2, axis=1))
    return ErrorSummary(float(np.mean(err)), float(np.max(err)), run.t.copy(), err, full,
                        stability_flag(run, bound))


def energy_drift(traj: TrajectoryRecord) -> tuple[np.ndarray, np.ndarray]:
    """Series (t, H(t) - H(0))."""
    return traj.t.copy(), traj.H - traj.H[0]


@dataclass(frozen=True, eq=False)
class OrderEstimate:
    slope: float
    h: np.ndarray
    errors: np.ndarray
    used: np.ndarray

    @property
    def excluded(self) -> np.ndarray:
        return self.h[~self.used]


def _march(step: Stepper, state: PhaseState, h: float, n: int) -> PhaseState:
    for _ in range(n):
        state = step(state, h)
    return state


def _end_error(args):
    model, integrator, order, iteration, state, h, n, target = args
    step = make_stepper(model, integrator, order, iteration)
    end = _march(step, state, h, n)
    return float(np.linalg.norm(end.as_vector() - target.as_vector()))


def convergence_order(model: HamiltonianModel, integrator: str, hs: Sequence[float], horizon: float,
                      initial_state: PhaseState, order: int = 4,
                      iteration: IterationConfig = IterationConfig(), workers: int = 1) -> OrderEstimate:
    """Least-squares slope of log(end-state error) against log(h).

    The oracle is the model's exact flow when it has one, else RK4 at an
    eighth of the smallest step. Scanning from the largest step down, the
    first step whose error fails to decrease marks the roundoff floor; it and
    all smaller steps are left out of the fit.

    Raises:
        ValueError: unless there are at least four steps in geometric progression,
            each dividing the horizon.
        DegenerateRegressionError: if fewer than two steps remain.
    """
    hs = np.sort(np.asarray(hs, dtype=float))[::-1]
    if len(hs) < 4:
        raise ValueError("need at least four step sizes")
    ratios = hs[:-1] / hs[1:]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError(f"step sizes are not in geometric progression: {hs}")
    counts = np.rint(horizon / hs).astype(int)
    if not np.allclose(counts * hs, horizon, rtol=1e-12, atol=0):
        raise ValueError("every step size must divide the horizon")
    t_end = initial_state.t + horizon
    if hasattr(model, "exact"):
        target = model.exact(initial_state, t_end)
    else:
        h_ref = hs[-1] / 8
        ref_step = make_stepper(model, "rk4")
        target = _march(ref_step, initial_state, h_ref, int(round(horizon / h_ref)))
    jobs = [(model, integrator, order, iteration, initial_state, h, n, target) for h, n in zip(hs, counts)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            errors = np.array(list(pool.map(_end_error, jobs)))
    else:
        errors = np.array([_end_error(j) for j in jobs])
    used = np.zeros(len(hs), dtype=bool)
    used[0] = errors[0] > 0
    for i in range(1, len(hs)):
        if not used[i - 1] or not 0 < errors[i] < errors[i - 1]:
            break
        used[i] = True
    if used.sum() < 2:
        raise DegenerateRegressionError(f"errors {errors.tolist()} leave fewer than two usable step sizes")
    slope = float(np.polyfit(np.log(hs[used]), np.log(errors[used]), 1)[0])
    if not used.all():
        log.info("roundoff floor reached; excluded h=%s", hs[~used].tolist())
    return OrderEstimate(slope, hs, errors, used)


@dataclass(frozen=True)
class ScanRow:
    p6: float
    stable: bool
    survival_time: float


def _scan_one(args) -> ScanRow:
    config, spin = args
    cfg = replace(config, initial_state=with_spin(config.start, spin), out=None, ref=None)
    try:
        record = run_simulation(cfg)
    except DivergenceError as exc:
        return ScanRow(spin, False, exc.t - config.start.t)
    return ScanRow(spin, stability_flag(record, config.bound), record.t[-1] - record.t[0])


def spin_scan(base: RunConfig, spins: Sequence[float], out=None, workers: int = 1) -> list[ScanRow]:
    """Run ``base`` once per spin value and record stability and survival time.

    Divergent runs are data, not errors. Rows come back in input order.
    """
    if base.model.kind != "levitron":
        raise ValueError("spin_scan needs the levitron model")
    jobs = [(base, float(s)) for s in spins]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_scan_one, jobs))
    else:
        rows = [_scan_one(j) for j in jobs]
    if out:
        write_scan_csv(rows, out)
    return rows


def write_scan_csv(rows: Sequence[ScanRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("p6,stable,survival_time\n")
        for r in rows:
            fh.write(f"{_fmt(r.p6)},{int(r.stable)},{_fmt(r.survival_time)}\n")


def stable_window(rows: Sequence[ScanRow]) -> tuple[float, float] | None:
    """First and last stable spin of the scan, or None when nothing is stable."""
    stable = [r.p6 for r in rows if r.stable]
    if not stable:
        return None
    return stable[0], stable[-1]


def certified_spin(rows: Sequence[ScanRow]) -> float:
    """Middle sample of the longest run of consecutive stable spins."""
    best, cur = [], []
    for r in rows:
        if r.stable:
            cur.append(r.p6)
            if len(cur) > len(best):
                best = list(cur)
        else:
            cur = []
    if not best:
        raise ValueError("no stable spin in scan")
    return best[len(best) // 2]
