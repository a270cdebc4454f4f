"""Compiled closed-form kernels for the ring-dipole potential and the Levitron Hamiltonian.

On the axis the potential is f(Z) = Z / (1 + Z^2)^(3/2) and off the axis the
truncated harmonic expansion reads Psi = f(Z) - (X^2 + Y^2) f''(Z) / 4.
Every partial derivative therefore reduces to the first four derivatives of f.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _axial(z):
    s = 1.0 + z * z
    z2 = z * z
    f0 = z / s**1.5
    f1 = (1.0 - 2.0 * z2) / s**2.5
    f2 = 3.0 * z * (2.0 * z2 - 3.0) / s**3.5
    f3 = -3.0 * (8.0 * z2 * z2 - 24.0 * z2 + 3.0) / s**4.5
    f4 = 15.0 * z * (8.0 * z2 * z2 - 40.0 * z2 + 15.0) / s**5.5
    return f0, f1, f2, f3, f4


@njit(cache=True)
def psi_value(x, y, z):
    f0, f1, f2, f3, f4 = _axial(z)
    return f0 - (x * x + y * y) * 0.25 * f2


@njit(cache=True)
def psi_grad(x, y, z):
    f0, f1, f2, f3, f4 = _axial(z)
    r2 = x * x + y * y
    g = np.empty(3)
    g[0] = -0.5 * x * f2
    g[1] = -0.5 * y * f2
    g[2] = f1 - 0.25 * r2 * f3
    return g


@njit(cache=True)
def psi_hess(x, y, z):
    f0, f1, f2, f3, f4 = _axial(z)
    r2 = x * x + y * y
    h = np.empty((3, 3))
    h[0, 0] = -0.5 * f2
    h[1, 1] = -0.5 * f2
    h[0, 1] = 0.0
    h[1, 0] = 0.0
    hxz = -0.5 * x * f3
    hyz = -0.5 * y * f3
    h[0, 2] = hxz
    h[2, 0] = hxz
    h[1, 2] = hyz
    h[2, 1] = hyz
    h[2, 2] = f2 - 0.25 * r2 * f4
    return h


@njit(cache=True)
def levitron_energy(q, p, a, c, m, gravity):
    s4 = math.sin(q[3])
    c4 = math.cos(q[3])
    c5 = math.cos(q[4])
    s5 = math.sin(q[4])
    d = p[4] - p[5] * c4
    kinetic = 0.5 * (
        p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3] / a + d * d / (a * s4 * s4) + p[5] * p[5] / c
    )
    g = psi_grad(q[0], q[1], q[2])
    magnetic = -m * (s4 * (c5 * g[0] + s5 * g[1]) + c4 * g[2])
    return kinetic + magnetic + gravity * q[2]


@njit(cache=True)
def levitron_dh_dp(q, p, a, c):
    s4 = math.sin(q[3])
    c4 = math.cos(q[3])
    d = p[4] - p[5] * c4
    w = d / (a * s4 * s4)
    out = np.empty(6)
    out[0] = p[0]
    out[1] = p[1]
    out[2] = p[2]
    out[3] = p[3] / a
    out[4] = w
    out[5] = p[5] / c - c4 * w
    return out


@njit(cache=True)
def levitron_dh_dq(q, p, a, c, m, gravity):
    s4 = math.sin(q[3])
    c4 = math.cos(q[3])
    c5 = math.cos(q[4])
    s5 = math.sin(q[4])
    d = p[4] - p[5] * c4
    g = psi_grad(q[0], q[1], q[2])
    h = psi_hess(q[0], q[1], q[2])
    # spin-axis direction in the lab frame
    n0 = s4 * c5
    n1 = s4 * s5
    out = np.empty(6)
    for j in range(3):
        out[j] = -m * (n0 * h[0, j] + n1 * h[1, j] + c4 * h[2, j])
    out[2] += gravity
    out[3] = p[5] * d / (a * s4) - c4 * d * d / (a * s4 * s4 * s4) - m * (c4 * (c5 * g[0] + s5 * g[1]) - s4 * g[2])
    out[4] = -m * s4 * (c5 * g[1] - s5 * g[0])
    out[5] = 0.0
    return out
