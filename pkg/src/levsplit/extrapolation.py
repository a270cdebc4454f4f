"""Multi-product expansions of a symmetric second-order kernel.

A kernel T2 is any one-step map ``kernel(state, h) -> PhaseState`` whose
error expansion contains only odd powers of h. The combination

    T_2n(h) = sum_i c_i T2^{k_i}(h / k_i),   k_i = i,

cancels the even error terms up to order 2n when the c_i solve the
Vandermonde system in k_i^-2.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from levsplit.hamiltonian import HamiltonianModel, PhaseState
from levsplit.integrators import (
    IterationConfig,
    StepReport,
    _SWEEPS,
    _check_form,
    _initial_guess,
    _residual,
    verlet_step,
)

Kernel = Callable[[PhaseState, float], PhaseState]

MAX_STAGES = 8


@dataclass(frozen=True)
class MPETable:
    """Subdivision counts and exact rational weights of an order-2n expansion."""

    order: int
    k: tuple
    c: tuple

    @property
    def n(self) -> int:
        return len(self.k)

    @property
    def pairs(self) -> tuple:
        """Weights as (numerator, denominator) integer pairs."""
        return tuple((f.numerator, f.denominator) for f in self.c)

    @property
    def weights(self) -> tuple:
        return tuple(float(f) for f in self.c)


def mpe_coefficients(n: int) -> MPETable:
    """Build the order-2n table with k_i = i and c_i = prod_{j != i} k_i^2 / (k_i^2 - k_j^2).

    Raises:
        ValueError: for n < 1.
        OverflowError: for n above the supported range of 8 stages.
    """
    if n < 1:
        raise ValueError(f"need at least one stage, got n={n}")
    if n > MAX_STAGES:
        raise OverflowError(f"n={n} exceeds the supported maximum of {MAX_STAGES} stages")
    ks = tuple(range(1, n + 1))
    cs = []
    for ki in ks:
        w = Fraction(1)
        for kj in ks:
            if kj != ki:
                w *= Fraction(ki * ki, ki * ki - kj * kj)
        cs.append(w)
    return MPETable(2 * n, ks, tuple(cs))


def _power(kernel: Kernel, state: PhaseState, h: float, k: int) -> PhaseState:
    sub = h / k
    for _ in range(k):
        state = kernel(state, sub)
    return state


def _combine(start: PhaseState, ends, weights, h: float) -> PhaseState:
    # sum c_i x_i written as x_0 + sum c_i (x_i - x_0): identical when the
    # weights sum to one, and keeps unchanged components bitwise unchanged
    dq = np.zeros_like(start.q)
    dp = np.zeros_like(start.p)
    for w, (q, p) in zip(weights, ends):
        dq += w * (q - start.q)
        dp += w * (p - start.p)
    return PhaseState(start.q + dq, start.p + dp, start.t + h)


def mpe_step(kernel: Kernel, state: PhaseState, h: float, table: MPETable) -> PhaseState:
    """One multi-product step; products are evaluated from the same start state."""
    ends = []
    for k in table.k:
        end = _power(kernel, state, h, k)
        ends.append((end.q, end.p))
    return _combine(state, ends, table.weights, h)


def richardson3_step(kernel: Kernel, state: PhaseState, h: float, k: int = 2) -> PhaseState:
    """Two-term extrapolation (k^2 T2^k(h/k) - T2(h)) / (k^2 - 1)."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    weights = (float(Fraction(-1, k * k - 1)), float(Fraction(k * k, k * k - 1)))
    coarse = kernel(state, h)
    fine = _power(kernel, state, h, k)
    return _combine(state, [(coarse.q, coarse.p), (fine.q, fine.p)], weights, h)


def verlet_kernel(model: HamiltonianModel, cfg: IterationConfig = IterationConfig(),
                  form: str = "VV") -> Kernel:
    """Wrap :func:`verlet_step` as a kernel for the expansions above."""
    def kernel(state, h):
        return verlet_step(model, state, h, cfg, form).new_state
    return kernel


def iterative_mpe_step(model: HamiltonianModel, state: PhaseState, h: float, table: MPETable,
                       cfg: IterationConfig = IterationConfig(), form: str = "VV") -> StepReport:
    """Multi-product step wrapped in an outer fixed-point loop.

    Every sweep runs all products, one frozen-gradient Verlet sweep per
    sub-step, and combines them. Each sub-step keeps its own stage values,
    which freeze the gradients of the same sub-step in the next sweep. The
    stopping rule is the one of :func:`verlet_step`, applied to the combined
    end state.
    """
    _check_form(form)
    sweep = _SWEEPS[form]
    q0, p0 = state.q, state.p
    model.check_state(q0)
    _, (q_prev, p_prev) = _initial_guess(model, form, q0, p0, h, cfg.init)
    guesses = None
    weights = table.weights
    for i in range(1, cfg.max_iters + 1):
        new_guesses = []
        ends = []
        for idx, k in enumerate(table.k):
            sub = h / k
            q, p = q0, p0
            stages = []
            for j in range(k):
                if guesses is None:
                    g, _ = _initial_guess(model, form, q, p, sub, cfg.init)
                else:
                    g = guesses[idx][j]
                q, p, g = sweep(model, q, p, sub, g)
                stages.append(g)
            new_guesses.append(stages)
            ends.append((q, p))
        guesses = new_guesses
        combined = _combine(state, ends, weights, h)
        residual = _residual(combined.q, combined.p, q_prev, p_prev)
        if residual <= cfg.tol:
            break
        q_prev, p_prev = combined.q, combined.p
    return StepReport(combined, i, residual)
