import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import bisect

from levsplit.errors import NoEquilibriumError, SingularityError
from levsplit.hamiltonian import (
    LevitronModel,
    LevitronParams,
    OscillatorModel,
    PhaseState,
    calibrate_M,
    levitron_dH_dp,
    levitron_dH_dq,
    levitron_energy,
    oscillator_dH_dp,
    oscillator_dH_dq,
    oscillator_energy,
    psi,
    vertical_force,
)

# Independent symbolic oracle for the ring-dipole potential
_X, _Y, _Z = sp.symbols("X Y Z", real=True)
_PSI = _Z / (1 + _Z**2) ** sp.Rational(3, 2) - (_X**2 + _Y**2) * sp.Rational(3, 4) * (2 * _Z**2 - 3) * _Z / (
    1 + _Z**2
) ** sp.Rational(7, 2)
_VARS = (_X, _Y, _Z)
_PSI_F = sp.lambdify(_VARS, _PSI)
_GRAD_F = sp.lambdify(_VARS, [sp.diff(_PSI, v) for v in _VARS])
_HESS_F = sp.lambdify(_VARS, [[sp.diff(_PSI, u, v) for v in _VARS] for u in _VARS])

coord = st.floats(-3, 3, allow_nan=False)


def random_states(n, rng, spread=1.0):
    q = rng.uniform(-spread, spread, (n, 6))
    q[:, 2] = rng.uniform(0.5, 3.0, n)
    q[:, 3] = rng.uniform(0.2, math.pi - 0.2, n)
    q[:, 4:] = rng.uniform(-math.pi, math.pi, (n, 2))
    p = rng.uniform(-2, 2, (n, 6))
    return q, p


def central_gradient(f, x, rel=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        step = rel * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2 * step)
    return g


class TestPsi:
    def test_origin_is_zero(self):
        assert psi((0, 0, 0)).value == 0.0

    def test_on_axis_unit_height(self):
        assert psi((0, 0, 1)).value == pytest.approx(2**-1.5, rel=1e-15)
        assert psi((0, 0, 1)).value == pytest.approx(0.353553, abs=1e-6)

    def test_mirror_in_x(self):
        a, b = psi((0.1, 0, 1)), psi((-0.1, 0, 1))
        assert a.value == b.value
        assert a.grad[0] == -b.grad[0]
        assert a.grad[0] != 0

    @given(z=coord)
    def test_transverse_gradient_vanishes_on_axis(self, z):
        g = psi((0, 0, z)).grad
        assert g[0] == 0.0 and g[1] == 0.0

    @given(x=coord, y=coord, z=coord)
    def test_hessian_exactly_symmetric(self, x, y, z):
        h = psi((x, y, z)).hess
        assert np.array_equal(h, h.T)

    @settings(max_examples=200)
    @given(x=coord, y=coord, z=coord)
    def test_matches_symbolic_oracle(self, x, y, z):
        d = psi((x, y, z))
        assert d.value == pytest.approx(_PSI_F(x, y, z), rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(d.grad, _GRAD_F(x, y, z), rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(d.hess, np.array(_HESS_F(x, y, z), dtype=float), rtol=1e-10, atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            psi((0, np.nan, 1))

    def test_outputs_are_read_only(self):
        d = psi((0.1, 0.2, 1.0))
        with pytest.raises(ValueError):
            d.grad[0] = 1.0


class TestPhaseState:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            PhaseState(np.zeros(5), np.zeros(6))

    def test_immutable_and_copied(self):
        q = np.zeros(6)
        s = PhaseState(q, np.zeros(6))
        q[0] = 1.0
        assert s.q[0] == 0.0
        with pytest.raises(ValueError):
            s.p[0] = 1.0

    def test_vector_roundtrip(self):
        s = PhaseState(np.arange(6.0), np.arange(6.0, 12.0), 3.0)
        r = PhaseState.from_vector(s.as_vector(), s.t)
        assert np.array_equal(r.q, s.q) and np.array_equal(r.p, s.p) and r.t == 3.0


class TestParams:
    @pytest.mark.parametrize("kw", [{"a": 0}, {"c": -1}, {"M": -0.1}, {"sin_guard": 0}, {"sin_guard": 1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LevitronParams(**kw)


UNIT = LevitronParams(1.0, 1.0, 3.0)


class TestLevitronEnergy:
    def test_upright_at_rest_is_height(self):
        s = PhaseState([0, 0, 1.72, math.pi / 2, 0, 0], np.zeros(6))
        for m in (0.0, 1.0, 7.5):
            assert levitron_energy(s, LevitronParams(M=m)) == pytest.approx(1.72, abs=1e-15)

    def test_adds_translational_kinetic(self):
        s = PhaseState([0, 0, 1.72, math.pi / 2, 0, 0], [1, 0, 0, 0, 0, 0])
        assert levitron_energy(s, LevitronParams(M=2.0)) == pytest.approx(2.22, abs=1e-15)

    def test_no_field_at_rest_is_height(self):
        s = PhaseState([0.3, -0.2, 0.9, math.pi / 2, 0.4, 1.1], np.zeros(6))
        assert levitron_energy(s, LevitronParams(M=0.0)) == 0.9

    def test_singularity_guard(self):
        s = PhaseState([0, 0, 1, 1e-9, 0, 0], np.zeros(6))
        with pytest.raises(SingularityError):
            levitron_energy(s, UNIT)
        with pytest.raises(SingularityError):
            levitron_dH_dq(s, UNIT)
        with pytest.raises(SingularityError):
            levitron_dH_dp(s, UNIT)

    def test_symbolic_hamiltonian(self):
        # full H rebuilt symbolically, then compared with the compiled energy
        q = sp.symbols("q1:7", real=True)
        p = sp.symbols("p1:7", real=True)
        a, c, m = sp.Rational(3, 10), sp.Rational(7, 10), sp.Rational(5, 2)
        sub = {_X: q[0], _Y: q[1], _Z: q[2]}
        gx, gy, gz = (sp.diff(_PSI, v).subs(sub) for v in _VARS)
        H = sp.Rational(1, 2) * (p[0] ** 2 + p[1] ** 2 + p[2] ** 2 + p[3] ** 2 / a
                                 + (p[4] - p[5] * sp.cos(q[3])) ** 2 / (a * sp.sin(q[3]) ** 2) + p[5] ** 2 / c)
        H += -m * (sp.sin(q[3]) * (sp.cos(q[4]) * gx + sp.sin(q[4]) * gy) + sp.cos(q[3]) * gz) + q[2]
        h_f = sp.lambdify(q + p, H)
        dq_f = sp.lambdify(q + p, [sp.diff(H, v) for v in q])
        dp_f = sp.lambdify(q + p, [sp.diff(H, v) for v in p])
        model = LevitronModel(LevitronParams(0.3, 0.7, 2.5))
        qs, ps = random_states(50, np.random.default_rng(7))
        for qi, pi in zip(qs, ps):
            args = [*qi, *pi]
            assert model.energy(qi, pi) == pytest.approx(h_f(*args), rel=1e-12)
            np.testing.assert_allclose(model.dH_dq(qi, pi), dq_f(*args), rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(model.dH_dp(qi, pi), dp_f(*args), rtol=1e-12, atol=1e-12)


class TestLevitronGradients:
    def test_zero_momentum_gives_zero_velocity(self):
        s = PhaseState([0.1, 0.2, 1.5, 0.7, 0.3, 0.1], np.zeros(6))
        assert np.array_equal(levitron_dH_dp(s, UNIT), np.zeros(6))

    def test_spin_components_upright(self):
        s = PhaseState([0, 0, 1, math.pi / 2, 0, 0], [0, 0, 0, 0, 1, 1])
        v = levitron_dH_dp(s, LevitronParams(1.0, 1.0, 0.0))
        assert v[4] == pytest.approx(1.0, abs=1e-15)
        assert v[5] == pytest.approx(1.0, abs=1e-15)

    def test_translational_velocity_is_momentum(self):
        qs, ps = random_states(20, np.random.default_rng(1))
        for q, p in zip(qs, ps):
            assert levitron_dH_dp(PhaseState(q, p), UNIT)[0] == p[0]

    def test_gravity_only(self):
        s = PhaseState([0.3, 0.1, 1.2, 0.9, 0.4, 2.0], [0.5, 0.1, -0.2, 0.7, 0, 0])
        g = levitron_dH_dq(s, LevitronParams(M=0.0))
        np.testing.assert_array_equal(g[[0, 1, 2, 4, 5]], [0, 0, 1, 0, 0])

    @settings(max_examples=300)
    @given(x=coord, y=coord, z=coord, th=st.floats(0.05, math.pi - 0.05), ps=coord, ph=coord,
           p=st.lists(coord, min_size=6, max_size=6))
    def test_cyclic_coordinate(self, x, y, z, th, ps, ph, p):
        s = PhaseState([x, y, z, th, ps, ph], p)
        assert levitron_dH_dq(s, UNIT)[5] == 0.0

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2024)
        model = LevitronModel(LevitronParams(0.05, 0.1, 8.0))
        qs, ps = random_states(1000, rng)
        worst = 0.0
        for q, p in zip(qs, ps):
            gq = central_gradient(lambda x: model.energy(x, p), q)
            gp = central_gradient(lambda x: model.energy(q, x), p)
            for analytic, fd in ((model.dH_dq(q, p), gq), (model.dH_dp(q, p), gp)):
                scale = max(np.linalg.norm(analytic), 1.0)
                worst = max(worst, np.linalg.norm(analytic - fd) / scale)
        assert worst <= 1e-6

    def test_vector_field_sign(self):
        model = LevitronModel(UNIT)
        q, p = random_states(1, np.random.default_rng(3))
        v, f = model.vector_field(q[0], p[0])
        assert np.array_equal(v, model.dH_dp(q[0], p[0]))
        assert np.array_equal(f, -model.dH_dq(q[0], p[0]))


class TestSymmetries:
    @settings(max_examples=200)
    @given(x=coord, y=coord, z=coord, th=st.floats(0.05, math.pi - 0.05), ps=coord,
           p=st.lists(coord, min_size=6, max_size=6))
    def test_axis_rotation_by_pi(self, x, y, z, th, ps, p):
        s = PhaseState([x, y, z, th, ps, 0.3], p)
        q2 = [-x, -y, z, th, ps + math.pi, 0.3]
        p2 = [-p[0], -p[1], *p[2:]]
        e1 = levitron_energy(s, UNIT)
        e2 = levitron_energy(PhaseState(q2, p2), UNIT)
        assert e2 == pytest.approx(e1, rel=1e-12, abs=1e-12)

    @given(x=coord, y=coord, z=coord, ps=coord)
    def test_energy_gauge_without_field(self, x, y, z, ps):
        params = LevitronParams(0.4, 0.9, 0.0)
        p = [0.3, -0.2, 0.5, 0.1, 0.7, 1.3]
        base = levitron_energy(PhaseState([0, 0, 0, 1.1, 0, 0], p), params)
        e = levitron_energy(PhaseState([x, y, z, 1.1, ps, 2.0], p), params) - z
        assert e == pytest.approx(base, rel=1e-12, abs=1e-12)


class TestCalibration:
    def test_residual_and_bisection_oracle(self):
        a, c, z, tilt = 0.05, 0.1, 1.72, 0.01
        m = calibrate_M(a, c, z, tilt)
        assert abs(vertical_force(LevitronParams(a, c, m), z, tilt)) < 1e-12
        oracle = bisect(lambda mm: vertical_force(LevitronParams(a, c, mm), z, tilt), 0.0, 100.0, xtol=1e-14)
        assert abs(m - oracle) <= 1e-10

    def test_upright_value(self):
        # dPsi/dZ at 1.72 only; the magnetic term must cancel unit gravity
        z = 1.72
        fpp = 3 * z * (2 * z * z - 3) / (1 + z * z) ** 3.5
        assert calibrate_M(1, 1, z, 1e-6) == pytest.approx(1 / fpp, rel=1e-9)

    def test_gravity_doubling_doubles_M(self):
        m1 = calibrate_M(1, 1, 1.72, 0.01)
        m2 = calibrate_M(1, 1, 1.72, 0.01, gravity=2.0)
        assert m2 == pytest.approx(2 * m1, rel=1e-14)

    def test_no_equilibrium_when_sideways(self):
        # with the axis horizontal on the symmetry axis the field gives no lift
        with pytest.raises(NoEquilibriumError):
            calibrate_M(1, 1, 1.72, math.pi / 2)

    def test_no_equilibrium_when_flipped(self):
        with pytest.raises(NoEquilibriumError):
            calibrate_M(1, 1, 1.72, math.pi - 0.01)

    def test_rejects_nonpositive_height(self):
        with pytest.raises(ValueError):
            calibrate_M(1, 1, 0.0, 0.01)


class TestOscillator:
    def test_energy(self):
        assert oscillator_energy(PhaseState([1, 0, 0, 0, 0, 0], np.zeros(6))) == 0.5

    @given(m=st.floats(0.1, 10), k=st.floats(0, 10), q=st.lists(coord, min_size=6, max_size=6),
           p=st.lists(coord, min_size=6, max_size=6))
    def test_gradients(self, m, k, q, p):
        s = PhaseState(q, p)
        np.testing.assert_allclose(oscillator_dH_dq(s, m, k), k * np.array(q), rtol=1e-15)
        np.testing.assert_allclose(oscillator_dH_dp(s, m, k), np.array(p) / m, rtol=1e-15)

    def test_exact_flow_is_periodic(self):
        model = OscillatorModel()
        s = PhaseState([1, 0.5, 0, 0, 0, 0], [0, 0.2, 0, 0, 0, 0])
        end = model.exact(s, 2 * math.pi)
        np.testing.assert_allclose(end.as_vector(), s.as_vector(), atol=1e-14)

    def test_exact_flow_with_zero_stiffness(self):
        model = OscillatorModel(2.0, [1, 0, 1, 1, 1, 1])
        s = PhaseState(np.zeros(6), [0, 1, 0, 0, 0, 0])
        assert model.exact(s, 3.0).q[1] == 1.5

    def test_exact_flow_solves_equations(self):
        model = OscillatorModel(1.5, 0.6)
        s = PhaseState(np.linspace(-1, 1, 6), np.linspace(1, -0.5, 6))
        d = 1e-6
        ahead, behind = model.exact(s, 0.7 + d), model.exact(s, 0.7 - d)
        mid = model.exact(s, 0.7)
        np.testing.assert_allclose((ahead.q - behind.q) / (2 * d), model.dH_dp(mid.q, mid.p), atol=1e-8)
        np.testing.assert_allclose((ahead.p - behind.p) / (2 * d), -model.dH_dq(mid.q, mid.p), atol=1e-8)

    @pytest.mark.parametrize("kw", [{"mass": 0}, {"stiffness": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            OscillatorModel(**kw)
