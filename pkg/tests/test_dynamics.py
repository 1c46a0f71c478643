import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from levyexit import (
    AffineClampedCoefficient,
    Ball,
    CompactSupport,
    ConfigurationError,
    ConstantCoefficient,
    ExponentialLight,
    HypothesisViolation,
    Interval,
    JumpCapExceeded,
    JumpList,
    PolynomialDrift,
    SystemSpec,
    WholeSpace,
    effective_drift,
    first_exit,
    flow_deterministic,
    simulate_sde,
)
from levyexit.dynamics import compensated_flow

ZERO_DRIFT = PolynomialDrift((0.0,))


def free_system(dim=1):
    return SystemSpec(ZERO_DRIFT, ConstantCoefficient(1.0), WholeSpace(dim))


class TestFlow:
    def test_linear_flow(self, benchmark):
        _, x = flow_deterministic(benchmark, [1.0], 1.0, 1e-3)
        assert abs(x[-1, 0] - math.exp(-1.0)) < 1e-9

    @given(st.floats(0.0, 20.0))
    def test_rest_point(self, T):
        _, x = flow_deterministic(SystemSpec.benchmark(), [0.0], T, 1e-2)
        assert np.all(x == 0.0)

    def test_cubic_richardson(self):
        system = SystemSpec(PolynomialDrift.cubic(), ConstantCoefficient(1.0), Interval(-3, 3))
        _, coarse = flow_deterministic(system, [2.0], 0.5, 1e-3)
        _, fine = flow_deterministic(system, [2.0], 0.5, 1e-4)
        assert abs(coarse[-1, 0] - fine[-1, 0]) < 1e-8

    def test_cubic_closed_form(self):
        # x' = -x - x^3 has x(t)^2 = x0^2 e^{-2t} / (1 + x0^2 (1 - e^{-2t}))
        system = SystemSpec(PolynomialDrift.cubic(), ConstantCoefficient(1.0), Interval(-3, 3))
        _, x = flow_deterministic(system, [2.0], 0.5, 1e-4)
        e = math.exp(-1.0)
        assert x[-1, 0] == pytest.approx(math.sqrt(4 * e / (1 + 4 * (1 - e))), abs=1e-10)

    def test_fourth_order(self, benchmark):
        errs = [abs(flow_deterministic(benchmark, [1.0], 1.0, h)[1][-1, 0] - math.exp(-1)) for h in (0.1, 0.05)]
        assert 12 < errs[0] / errs[1] < 20

    def test_bad_step(self, benchmark):
        with pytest.raises(ConfigurationError):
            flow_deterministic(benchmark, [1.0], 1.0, 0.0)

    @given(st.floats(-0.999, 0.999), st.floats(0.0, 5.0))
    def test_positive_invariance(self, x0, T):
        _, x = flow_deterministic(SystemSpec.benchmark(), [x0], T, 1e-2)
        assert np.all(np.abs(x) <= abs(x0) + 1e-15)
        assert abs(x[-1, 0]) <= abs(x0) * math.exp(-T) * (1 + 1e-9) + 1e-15

    def test_positive_invariance_planar_ball(self):
        system = SystemSpec(PolynomialDrift.cubic(), ConstantCoefficient(1.0), Ball(1.0, (0.0, 0.0)))
        for z in system.domain.boundary_points(32):
            _, x = flow_deterministic(system, 0.999 * z, 3.0, 1e-2)
            assert np.all(np.linalg.norm(x, axis=1) < 1.0)
            assert np.linalg.norm(x[-1]) < 0.05


class TestEffectiveDrift:
    def test_symmetric_measure(self, benchmark, nu):
        assert effective_drift(benchmark, nu, np.array([0.7]))[0] == -0.7

    def test_shifted_compact(self, benchmark):
        nu = CompactSupport(1.0, center=0.15)
        assert nu.first_moment()[0] == pytest.approx(0.3, rel=1e-10)
        assert effective_drift(benchmark, nu, np.array([1.0]))[0] == pytest.approx(-1.3, rel=1e-10)

    def test_vanishing_coefficient(self):
        system = SystemSpec(PolynomialDrift.linear(), ConstantCoefficient(0.0), Interval(-1, 1))
        nu = CompactSupport(1.0, center=0.15)
        assert effective_drift(system, nu, np.array([0.4]))[0] == -0.4
        assert not system.check_hypotheses()["coefficient_nonzero"]


class TestHypotheses:
    def test_benchmark_passes(self, benchmark):
        assert all(benchmark.check_hypotheses().values())
        benchmark.validate()

    def test_affine_clamped(self):
        system = SystemSpec(PolynomialDrift.cubic(), AffineClampedCoefficient(1.0, (0.5,), 0.2), Interval(-1, 1))
        assert all(system.check_hypotheses().values())

    def test_expanding_drift_fails(self):
        system = SystemSpec(PolynomialDrift.linear(-1.0), ConstantCoefficient(1.0), Interval(-1, 1))
        rep = system.check_hypotheses()
        assert not rep["coercive"] and not rep["inward_pointing"]
        with pytest.raises(HypothesisViolation):
            system.validate()

    def test_domain_must_contain_origin(self):
        with pytest.raises(ConfigurationError):
            Interval(0.5, 1.0)
        from levyexit import Box
        with pytest.raises(ConfigurationError):
            Box((-1.0, 0.2), (1.0, 1.0))

    def test_affine_rejects_zero_offset(self):
        with pytest.raises(ConfigurationError):
            AffineClampedCoefficient(0.0, (1.0,), 0.1)


class TestSimulate:
    def test_empty_jumps_follow_flow(self, benchmark, nu):
        tr = simulate_sde(benchmark, nu, [0.5], 0.3, 1.0, jumps=JumpList.empty(1), dt=1e-3)
        _, x = flow_deterministic(benchmark, [0.5], 1.0, 1e-3)
        assert tr.n_jumps == 0
        assert tr.terminal_state[0] == x[-1, 0]

    def test_empty_jumps_compensated(self, benchmark):
        nu = CompactSupport(1.0, center=0.15)
        tr = simulate_sde(benchmark, nu, [0.5], 0.3, 1.0, jumps=JumpList.empty(1), dt=1e-3)
        # x' = -x - 0.3 from 0.5
        assert tr.terminal_state[0] == pytest.approx(-0.3 + 0.8 * math.exp(-1.0), abs=1e-10)

    @given(st.floats(0.05, 0.95), st.floats(-2.0, 2.0).filter(lambda v: abs(v) > 1e-3), st.floats(0.01, 1.0))
    def test_single_jump_update(self, t1, z, eps):
        system, nu = SystemSpec.benchmark(), ExponentialLight()
        tr = simulate_sde(system, nu, [0.2], eps, 1.0, jumps=JumpList(np.array([t1]), np.array([z])))
        row = int(np.flatnonzero(tr.jump)[0])
        assert tr.times[row] == t1
        assert tr.post[row, 0] == tr.pre[row, 0] + eps * z
        assert tr.pre[row, 0] == pytest.approx(0.2 * math.exp(-t1), abs=1e-12)

    def test_multiplicative_jump(self):
        g = AffineClampedCoefficient(1.0, (0.5,), 0.2)
        system = SystemSpec(PolynomialDrift.linear(), g, Interval(-1, 1))
        tr = simulate_sde(system, ExponentialLight(), [0.4], 0.5, 1.0, jumps=JumpList(np.array([0.3]), np.array([0.8])))
        row = int(np.flatnonzero(tr.jump)[0])
        assert tr.post[row, 0] == pytest.approx(tr.pre[row, 0] + 0.5 * float(g(tr.pre[row])) * 0.8, rel=1e-14)

    def test_state_reconstruction(self, benchmark, nu):
        tr = simulate_sde(benchmark, nu, [0.3], 0.2, 2.0, rng=np.random.default_rng(3))
        for i in range(1, len(tr.times)):
            if tr.times[i] - tr.times[i - 1] > 1e-9:
                left = tr.state_at(tr.times[i] - 1e-13, benchmark, nu, dt=1e-3)
                assert left[0] == pytest.approx(tr.pre[i, 0], abs=1e-9)

    def test_small_noise_tracks_flow(self, benchmark, nu):
        # Gaussian OU reference for the 0.05 band: P(sup < 0.05) ~ 0.952 at eps = 1e-3
        rng = np.random.default_rng(4)
        devs = []
        for _ in range(1000):
            tr = simulate_sde(benchmark, nu, [0.5], 1e-3, 1.0, rng=rng, dt=1e-2)
            # between breakpoints the deviation only contracts, so breakpoint states bound the sup
            devs.append(max(np.max(np.abs(tr.pre[:, 0] - 0.5 * np.exp(-tr.times))),
                            np.max(np.abs(tr.post[:, 0] - 0.5 * np.exp(-tr.times)))))
        devs = np.array(devs)
        assert np.mean(devs < 0.1) >= 0.99
        assert np.mean(devs < 0.05) >= 0.93

    def test_compensated_isometry(self):
        system, nu = free_system(), ExponentialLight()
        rng = np.random.default_rng(5)
        x = np.array([simulate_sde(system, nu, [0.0], 0.2, 1.0, rng=rng).terminal_state[0] for _ in range(10**4)])
        assert abs(x.mean()) < 3 * x.std() / 100
        assert x.var() == pytest.approx(0.2 * math.sqrt(math.pi) / 2, rel=0.05)

    def test_concentration_monotone_in_eps(self, benchmark, nu):
        probs = []
        for k, eps in enumerate((0.4, 0.2, 0.1, 0.05)):
            rng = np.random.default_rng(100 + k)
            far = 0
            for _ in range(400):
                tr = simulate_sde(benchmark, nu, [0.5], eps, 1.0, rng=rng, dt=1e-2)
                dev = max(np.max(np.abs(tr.pre[:, 0] - 0.5 * np.exp(-tr.times))),
                          np.max(np.abs(tr.post[:, 0] - 0.5 * np.exp(-tr.times))))
                far += dev > 0.5
            probs.append(far / 400)
        se = [math.sqrt(max(p * (1 - p), 1e-4) / 400) for p in probs]
        for a, b, sa, sb in zip(probs, probs[1:], se, se[1:]):
            assert b <= a + 3 * math.hypot(sa, sb)
        assert probs[-1] < probs[0]

    def test_jump_cap(self, benchmark, nu):
        with pytest.raises(JumpCapExceeded):
            simulate_sde(benchmark, nu, [0.0], 1e-3, 1.0, rng=np.random.default_rng(0), max_jumps=100)

    def test_csv_dump(self, benchmark, nu):
        tr = simulate_sde(benchmark, nu, [0.1], 0.3, 1.0, rng=np.random.default_rng(1))
        lines = tr.to_csv().splitlines()
        assert lines[0] == "time,pre_0,post_0,jump"
        assert len(lines) == len(tr.times) + 1
        assert sum(line.endswith(",1") for line in lines[1:]) == tr.n_jumps

    def test_requires_noise_source(self, benchmark, nu):
        with pytest.raises(ConfigurationError):
            simulate_sde(benchmark, nu, [0.0], 0.3, 1.0)


class TestFirstExit:
    def test_outside_start(self, benchmark, nu):
        res = first_exit(benchmark, nu, [1.2], 0.3, np.random.default_rng(0))
        assert res.status == "exit" and res.time == 0.0 and res.point[0] == 1.2

    def test_benchmark_exits(self, benchmark, nu):
        rng = np.random.default_rng(6)
        res = [first_exit(benchmark, nu, [0.0], 0.3, rng, t_cap=1e4) for _ in range(200)]
        times = np.array([r.time for r in res])
        assert not any(r.timeout for r in res)
        assert 0 < np.median(times) < np.inf
        assert all(abs(r.point[0]) >= 1.0 for r in res)

    def test_timeout(self, benchmark, nu):
        res = first_exit(benchmark, nu, [0.0], 0.02, np.random.default_rng(7), t_cap=10.0)
        assert res.timeout and res.time == 10.0

    def test_whole_space_times_out(self, nu):
        res = first_exit(free_system(), nu, [0.0], 0.3, np.random.default_rng(8), t_cap=5.0)
        assert res.timeout

    def test_continuous_crossing_located(self):
        # deterministic drift pushes out through 1 with no jumps: x' = 1 - x^0 ... use b = 2 (constant)
        system = SystemSpec(PolynomialDrift((2.0,)), ConstantCoefficient(1.0), Interval(-1, 1))
        nu = CompactSupport(1.0, density_value=1e-12)
        res = first_exit(system, nu, [0.0], 1.0, np.random.default_rng(0), dt=1e-2, t_cap=5.0)
        assert res.time == pytest.approx(0.5, abs=1e-5)
        assert res.point[0] == pytest.approx(1.0, abs=1e-4)

    def test_planar_ball_exit(self, nu):
        system = SystemSpec(PolynomialDrift.linear(), ConstantCoefficient(1.0), Ball(1.0, (0.0, 0.0)))
        res = first_exit(system, ExponentialLight(2.0, dim=2), [0.0, 0.0], 0.4, np.random.default_rng(9), t_cap=1e4)
        assert not res.timeout and np.linalg.norm(res.point) >= 1.0


def test_step_halving_report_shrinks_at_fourth_order():
    from levyexit.dynamics import step_halving_report

    system = SystemSpec(PolynomialDrift.cubic(), ConstantCoefficient(1.0), WholeSpace(1))
    rows = step_halving_report(system, ExponentialLight(), 0.8, 0.3, 2.0, np.random.default_rng(4), dt=0.1)
    diffs = [d for _, d in rows]
    assert [h for h, _ in rows] == pytest.approx([0.1, 0.05, 0.025])
    # partial steps at jump times blur the per-halving ratio; two halvings still gain ~16^2
    assert all(a > b for a, b in zip(diffs, diffs[1:]))
    assert diffs[0] > 50 * diffs[-1]
    assert diffs[0] < 1e-6
