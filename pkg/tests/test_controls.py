import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from levyexit import (
    AffineClampedCoefficient,
    BallIndicator,
    CompactSupport,
    ConfigurationError,
    ConstantCoefficient,
    ConstantTilt,
    ExponentialLight,
    GridTilt,
    Identity,
    Interval,
    MarkPartition,
    Polyline,
    PolynomialDrift,
    SupportViolation,
    SystemSpec,
    control_for_path,
    entropy,
    flow_deterministic,
    solve_controlled_ode,
    tilt_for_path,
    verify_control_integrability,
)
from levyexit.controls import control_from_block, ell

SQRT_PI = math.sqrt(math.pi)


def ball_entropy_oracle(center, t0, t1):
    """Dense quadrature of int int l(g) dnu ds for the unit ball control of the benchmark."""

    def inner(s):
        c = center(s)

        def f(z):
            nu = math.exp(-z * z)
            g = 1.0 + 1.0 / (2.0 * nu)
            return nu * g * math.log(g) - 0.5  # nu * l(g) with nu (g - 1) = 1/2
        val, _ = integrate.quad(f, c - 1.0, c + 1.0, epsabs=1e-14, epsrel=1e-13)
        return val

    val, _ = integrate.quad(inner, t0, t1, epsabs=1e-13, epsrel=1e-12)
    return val


def young_lhs(control, measure, n_t=64):
    # int_0^T int_{|z|<=1} z^2 g dnu ds by tensor Gauss-Legendre (time) and dense Simpson (mark)
    T = control.horizon
    edges = control.time_cells()
    x, w = np.polynomial.legendre.leggauss(8)
    z = np.linspace(-1.0, 1.0, 4001)
    z = z[z != 0.0]
    dens = measure.density(z)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        for xi, wi in zip(x, w):
            s = 0.5 * (b - a) * xi + 0.5 * (a + b)
            g = control(np.full(len(z), s), z.reshape(-1, 1), measure)
            total += 0.5 * (b - a) * wi * np.trapezoid(z * z * g * dens, z)
    return total


class TestEll:
    @given(st.floats(0.0, 1e6))
    def test_nonnegative(self, g):
        assert ell(g) >= 0.0

    def test_values(self):
        assert ell(1.0) == 0.0
        assert ell(0.0) == 1.0
        assert ell(2.0) == pytest.approx(2 * math.log(2) - 1, rel=1e-15)


class TestEntropy:
    def test_identity(self, nu):
        assert entropy(Identity(3.0), nu) == 0.0

    def test_constant_tilt(self, nu):
        oracle = integrate.quad(lambda z: math.exp(-z * z), -np.inf, np.inf, epsabs=1e-14)[0] * (2 * math.log(2) - 1)
        assert entropy(ConstantTilt(2.0, 1.0), nu) == pytest.approx(oracle, rel=1e-6)
        assert oracle == pytest.approx(0.68469, abs=1e-5)

    def test_ball_straight_line(self, benchmark, nu):
        c = control_for_path(Polyline.straight(0.0, 0.5, 0.5), benchmark, nu)
        assert isinstance(c, BallIndicator)
        # path s -> s has velocity 1 and b = -s, so the ball centre is 1 + s
        oracle = ball_entropy_oracle(lambda s: 1.0 + s, 0.0, 0.5)
        assert entropy(c, nu) == pytest.approx(oracle, rel=1e-6)

    def test_nonpositive_horizon(self, nu):
        with pytest.raises(ConfigurationError):
            ConstantTilt(2.0, 0.0)

    @given(st.floats(0.0, 10.0), st.floats(0.1, 3.0))
    def test_zero_iff_identity(self, c, T):
        e = entropy(ConstantTilt(c, T), ExponentialLight())
        assert e >= 0.0
        assert (e == 0.0) == (c == 1.0)

    @given(st.lists(st.floats(0.0, 4.0), min_size=2, max_size=2))
    def test_grid_concatenation_additive(self, lv):
        nu = ExponentialLight()
        part = MarkPartition.default(nu)
        a = GridTilt(np.array([0.0, 0.3, 0.7]), np.full((2, part.n_cells), lv[0]), part)
        b = GridTilt(np.array([0.0, 0.5]), np.full((1, part.n_cells), lv[1]), part)
        assert entropy(a.concatenate(b), nu) == pytest.approx(entropy(a, nu) + entropy(b, nu), rel=1e-14, abs=1e-15)

    def test_ball_concatenation_additive(self, benchmark, nu):
        p1 = Polyline(np.array([0.0, 0.4, 1.0]), np.array([[0.0], [0.3], [0.5]]))
        p2 = Polyline(np.array([0.0, 0.7]), np.array([[0.5], [0.8]]))
        whole = entropy(control_for_path(p1.concatenate(p2), benchmark, nu), nu)
        parts = entropy(control_for_path(p1, benchmark, nu), nu) + entropy(control_for_path(p2, benchmark, nu), nu)
        assert whole == pytest.approx(parts, rel=1e-12)


class TestControlledODE:
    def test_identity_is_flow(self, benchmark, nu):
        path = solve_controlled_ode(Identity(1.0), benchmark, nu, [0.8])
        _, x = flow_deterministic(benchmark, [0.8], 1.0, 1e-3)
        assert path.terminal[0] == pytest.approx(x[-1, 0], abs=1e-12)

    def test_constant_tilt_symmetric_is_flow(self, benchmark, nu):
        path = solve_controlled_ode(ConstantTilt(3.0, 1.0), benchmark, nu, [0.8])
        assert path.terminal[0] == pytest.approx(0.8 * math.exp(-1.0), abs=1e-12)

    def test_ball_straight_line_endpoint(self, benchmark, nu):
        c = control_for_path(Polyline.straight(0.0, 0.5, 0.5), benchmark, nu)
        assert abs(solve_controlled_ode(c, benchmark, nu, [0.0]).terminal[0] - 0.5) < 1e-4

    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0.2, 3.0))
    def test_ball_reproduces_polyline(self, x0, y0, T):
        system, nu = SystemSpec.benchmark(), ExponentialLight()
        path = Polyline(np.array([0.0, 0.3 * T, T]), np.array([[x0], [0.5 * (x0 + y0) + 0.1], [y0]]))
        c = control_for_path(path, system, nu)
        sol = solve_controlled_ode(c, system, nu, [x0])
        assert abs(sol.terminal[0] - y0) < 1e-4

    def test_negative_coefficient(self, nu):
        g = AffineClampedCoefficient(-1.0, (0.5,), 0.2)
        system = SystemSpec(PolynomialDrift.linear(), g, Interval(-1, 1))
        c = control_for_path(Polyline.straight(0.0, 0.6, 1.0), system, nu)
        s = np.linspace(0, 1, 7)
        assert np.all(c(s, np.full(7, 1.3).reshape(-1, 1), nu) >= 1.0)
        assert abs(solve_controlled_ode(c, system, nu, [0.0]).terminal[0] - 0.6) < 1e-4

    def test_planar_ball(self):
        nu = ExponentialLight(2.0, dim=2)
        from levyexit import Ball
        system = SystemSpec(PolynomialDrift.linear(), ConstantCoefficient(1.0), Ball(1.0, (0.0, 0.0)))
        c = control_for_path(Polyline.straight([0.0, 0.0], [0.3, -0.4], 1.0), system, nu)
        end = solve_controlled_ode(c, system, nu, [0.0, 0.0]).terminal
        assert np.max(np.abs(end - [0.3, -0.4])) < 1e-4


class TestControlForPath:
    def test_rest_point_gives_identity(self, benchmark, nu):
        c = control_for_path(Polyline.straight(0.0, 0.0, 2.0), benchmark, nu)
        assert isinstance(c, Identity) and entropy(c, nu) == 0.0

    def test_flow_segment_gives_identity(self, benchmark, nu):
        # straight polylines are not flow lines unless at rest; a zero-drift system moves nothing either
        system = SystemSpec(PolynomialDrift((0.0,)), ConstantCoefficient(1.0), Interval(-1, 1))
        assert isinstance(control_for_path(Polyline.straight(0.3, 0.3, 1.0), system, nu), Identity)

    def test_centroid_identity(self, benchmark, nu):
        # at s = 0 the straight line 0 -> 0.5 in time 0.5 needs P = 1
        c = control_for_path(Polyline.straight(0.0, 0.5, 0.5), benchmark, nu)
        assert c.mark_integral(np.array([0.0]), nu)[0, 0] == pytest.approx(1.0, abs=1e-8)
        s = np.linspace(0.0, 0.5, 11)
        assert np.allclose(c.mark_integral(s, nu)[:, 0], 1.0 + s, atol=1e-8)

    def test_centroid_quadrature_oracle(self, benchmark, nu):
        c = control_for_path(Polyline.straight(0.0, 0.5, 0.5), benchmark, nu)
        f = lambda z: (float(c(np.array([0.0]), np.array([[z]]), nu)[0]) - 1.0) * z * math.exp(-z * z)
        val, _ = integrate.quad(f, -1.0, 3.0, points=[0.0, 2.0], epsabs=1e-13, epsrel=1e-12)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_support_violation(self, benchmark):
        nu = CompactSupport(1.0)
        with pytest.raises(SupportViolation):
            control_for_path(Polyline.straight(0.0, 0.9, 0.5), benchmark, nu)

    def test_mismatched_dimension(self, benchmark):
        with pytest.raises(ConfigurationError):
            control_for_path(Polyline.straight([0.0, 0.0], [0.5, 0.0], 1.0), benchmark, ExponentialLight())


class TestIntegrability:
    def test_identity(self, nu):
        rep = verify_control_integrability(Identity(1.0), nu)
        assert rep.second_moment == pytest.approx(SQRT_PI / 2, rel=1e-10)
        assert rep.abs_first == 0.0
        assert all(v == 0.0 for v in rep.moduli.values())

    def test_constant_tilt(self, nu):
        rep = verify_control_integrability(ConstantTilt(3.0, 1.0), nu)
        assert rep.second_moment == pytest.approx(3 * SQRT_PI / 2, rel=1e-8)
        # int |z| |g - 1| dnu = 2 * int |z| e^{-z^2} = 2
        assert rep.abs_first == pytest.approx(2.0, rel=1e-8)

    def test_moduli_shrink(self, benchmark, nu):
        controls = [
            ConstantTilt(3.0, 1.0),
            control_for_path(Polyline(np.array([0.0, 0.5, 2.0]), np.array([[0.0], [0.4], [0.9]])), benchmark, nu),
            tilt_for_path(Polyline.straight(0.0, 0.8, 1.5), benchmark, nu),
        ]
        for c in controls:
            m = verify_control_integrability(c, nu, deltas=(0.1, 0.01, 0.001, 1e-5)).moduli
            vals = [m[d] for d in (0.1, 0.01, 0.001, 1e-5)]
            assert all(a >= b for a, b in zip(vals, vals[1:]))
            assert vals[-1] < 1e-3 * max(vals[0], 1e-300)

    def test_young_bound(self, benchmark, nu):
        base = nu.second_moment_below(1.0)
        controls = [
            ConstantTilt(2.5, 1.0),
            ConstantTilt(0.2, 2.0),
            control_for_path(Polyline.straight(0.0, 0.9, 1.0), benchmark, nu),
            tilt_for_path(Polyline.straight(0.0, 0.8, 1.5), benchmark, nu),
        ]
        for c in controls:
            assert young_lhs(c, nu) <= math.e * c.horizon * base + entropy(c, nu)


class TestTiltForPath:
    def test_endpoint(self, benchmark, nu):
        path = Polyline(np.array([0.0, 1.0, 3.0]), np.array([[0.0], [0.4], [1.0]]))
        c = tilt_for_path(path, benchmark, nu, h_max=0.005)
        sol = solve_controlled_ode(c, benchmark, nu, [0.0])
        assert abs(sol.terminal[0] - 1.0) < 1e-4
        assert abs(np.interp(1.0, sol.times, sol.states[:, 0]) - 0.4) < 1e-4

    def test_cheaper_than_ball(self, benchmark, nu):
        path = Polyline.straight(0.0, 1.0, 4.0)
        assert entropy(tilt_for_path(path, benchmark, nu), nu) < entropy(control_for_path(path, benchmark, nu), nu)

    def test_flow_path_costs_little(self, benchmark, nu):
        # a polyline hugging the flow needs only a small forcing
        t = np.linspace(0, 1, 9)
        path = Polyline(t, 0.8 * np.exp(-t)[:, None])
        assert entropy(tilt_for_path(path, benchmark, nu), nu) < 1e-4


class TestSerialization:
    def test_round_trip(self, benchmark, nu):
        controls = [
            Identity(1.5),
            ConstantTilt(2.0, 0.7),
            tilt_for_path(Polyline.straight(0.0, 0.6, 1.0), benchmark, nu),
            control_for_path(Polyline.straight(0.0, 0.5, 0.5), benchmark, nu),
        ]
        for c in controls:
            lines = c.to_block()
            values = dict(line.split(" = ", 1) for line in lines)
            back = control_from_block(values, benchmark, nu)
            assert back.kind == c.kind
            assert entropy(back, nu) == entropy(c, nu)


def test_ray_supported_measure_needs_tilt_family():
    from levyexit import Ball, GaussTemperedStable

    nu = GaussTemperedStable(0.5, 1.0, directions=((1.0, 0.0), (0.0, 1.0)), weights=(0.5, 0.5), cutoff=0.01)
    system = SystemSpec(PolynomialDrift.linear(), ConstantCoefficient(1.0), Ball(1.0, np.zeros(2)))
    path = Polyline.straight(np.zeros(2), np.array([0.3, 0.2]), 1.0)
    with pytest.raises(SupportViolation):
        control_for_path(path, system, nu)
    g = tilt_for_path(path, system, nu)
    end = solve_controlled_ode(g, system, nu, np.zeros(2)).states[-1]
    assert np.allclose(end, [0.3, 0.2], atol=1e-4)
    assert entropy(g, nu) > 0
