import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from levyexit import (
    CompactSupport,
    ConfigurationError,
    ConstantTilt,
    DegenerateWeight,
    ExponentialLight,
    GridTilt,
    Identity,
    JumpList,
    MarkPartition,
    NoiseParams,
    girsanov_log_weight,
    simulate_prm,
    simulate_tilted_prm,
)

SQRT_PI = math.sqrt(math.pi)


def counts(params, n, seed, control=None, **kw):
    rng = np.random.default_rng(seed)
    if control is None:
        return np.array([len(simulate_prm(params, rng)) for _ in range(n)])
    return np.array([len(simulate_tilted_prm(params, control, rng, **kw)) for _ in range(n)])


def sign_tilt(measure, horizon=1.0, level=2.0):
    part = MarkPartition.default(measure)
    cent = measure.bin_moments(part).centroids
    levels = np.where(cent[:, 0] > 0, level, 1.0)[None, :]
    return GridTilt(np.array([0.0, horizon]), levels, part)


class TestParams:
    def test_epsilon_range(self):
        with pytest.raises(ConfigurationError):
            NoiseParams(0.0, ExponentialLight(), 1.0)
        with pytest.raises(ConfigurationError):
            NoiseParams(1.5, ExponentialLight(), 1.0)

    def test_zero_mass(self):
        with pytest.raises(ConfigurationError):
            simulate_prm(NoiseParams(0.5, CompactSupport(1.0, density_value=0.0), 1.0), np.random.default_rng(0))


class TestPlainPRM:
    def test_mean_count(self):
        c = counts(NoiseParams(0.1, ExponentialLight(), 1.0), 10**4, 0)
        assert abs(c.mean() - SQRT_PI / 0.1) < 3 * c.std() / math.sqrt(len(c))

    def test_zero_horizon(self):
        assert len(simulate_prm(NoiseParams(1.0, ExponentialLight(), 0.0), np.random.default_rng(0))) == 0

    def test_poisson_mean_equals_variance(self):
        c = counts(NoiseParams(0.5, CompactSupport(1.0), 2.0), 10**4, 1)
        n = len(c)
        assert abs(c.mean() - 8.0) < 3 * math.sqrt(8.0 / n)
        # variance of the sample variance of a Poisson(8) is about (8 + 2 * 64) / n
        assert abs(c.var(ddof=1) - 8.0) < 3 * math.sqrt((8.0 + 2 * 64.0) / n)

    def test_times_sorted_inside_horizon(self):
        j = simulate_prm(NoiseParams(0.05, ExponentialLight(), 3.0), np.random.default_rng(5))
        assert np.all(np.diff(j.times) > 0) and j.times[0] >= 0 and j.times[-1] <= 3.0

    @given(st.integers(0, 2**32 - 1))
    def test_determinism(self, seed):
        p = NoiseParams(0.2, ExponentialLight(), 1.0)
        a = simulate_prm(p, np.random.default_rng(seed))
        b = simulate_prm(p, np.random.default_rng(seed))
        assert np.array_equal(a.times, b.times) and np.array_equal(a.marks, b.marks)


class TestTiltedPRM:
    def test_identity_is_bitwise_plain(self):
        p = NoiseParams(0.3, ExponentialLight(), 1.0)
        for seed in range(20):
            a = simulate_prm(p, np.random.default_rng(seed))
            b = simulate_tilted_prm(p, Identity(1.0), np.random.default_rng(seed))
            assert np.array_equal(a.times, b.times) and np.array_equal(a.marks, b.marks)

    def test_identity_count_distribution(self):
        p = NoiseParams(0.5, ExponentialLight(), 1.0)
        a = counts(p, 10**4, 2)
        b = counts(p, 10**4, 3, control=ConstantTilt(1.0, 1.0), method="thinning")
        assert stats.ks_2samp(a, b).pvalue > 0.01

    @pytest.mark.parametrize("method", ["auto", "thinning"])
    def test_doubled_count(self, method):
        c = counts(NoiseParams(0.5, ExponentialLight(), 1.0), 10**4, 4, control=ConstantTilt(2.0, 1.0), method=method)
        assert abs(c.mean() - 2 * SQRT_PI / 0.5) < 3 * c.std() / math.sqrt(len(c))

    def test_positive_side_inflation(self):
        nu = ExponentialLight()
        g = sign_tilt(nu)
        rng = np.random.default_rng(5)
        marks = np.concatenate([simulate_tilted_prm(NoiseParams(0.2, nu, 1.0), g, rng).marks[:, 0] for _ in range(500)])
        assert marks.mean() > 3 * marks.std() / math.sqrt(len(marks))

    def test_unbounded_control_rejected(self):
        class Unbounded(ConstantTilt):
            def upper_bound(self, measure=None):
                return math.inf

        with pytest.raises(ConfigurationError):
            simulate_tilted_prm(NoiseParams(0.5, ExponentialLight(), 1.0), Unbounded(2.0, 1.0),
                                np.random.default_rng(0), method="thinning")

    @pytest.mark.parametrize("method", ["auto", "thinning"])
    def test_thinning_chi_square(self, method):
        # counts per (time cell x mark cell) are Poisson with mean (1/eps) int int g dnu ds
        nu = ExponentialLight()
        part = MarkPartition.default(nu)
        bm = nu.bin_moments(part)
        rng_lv = np.random.default_rng(9)
        levels = rng_lv.uniform(0.3, 3.0, size=(2, part.n_cells))
        g = GridTilt(np.array([0.0, 0.4, 1.0]), levels, part)
        eps, n = 0.5, 10**4
        p = NoiseParams(eps, nu, 1.0)
        rng = np.random.default_rng(10)
        obs = np.zeros((2, part.n_cells + 1))
        for _ in range(n):
            j = simulate_tilted_prm(p, g, rng, method=method)
            k = (j.times >= 0.4).astype(int)
            c = part.cell_index(j.marks)
            np.add.at(obs, (k, np.where(c < 0, part.n_cells, c)), 1)
        dt = np.array([0.4, 0.6])
        tail = nu.total_mass() - bm.mass.sum()
        exp_cells = n / eps * dt[:, None] * np.hstack([levels * bm.mass[None, :], np.full((2, 1), tail)])
        use = exp_cells > 5
        chi2 = float(np.sum((obs[use] - exp_cells[use]) ** 2 / exp_cells[use]))
        assert chi2 < stats.chi2.ppf(0.99, use.sum())


class TestGirsanov:
    def test_identity_zero(self):
        p = NoiseParams(0.3, ExponentialLight(), 1.0)
        j = simulate_prm(p, np.random.default_rng(0))
        assert girsanov_log_weight(p, Identity(1.0), j) == 0.0

    @given(st.floats(0.2, 5.0), st.floats(0.05, 1.0), st.floats(0.1, 3.0), st.integers(0, 50))
    def test_constant_closed_form(self, c, eps, T, n):
        nu = ExponentialLight()
        p = NoiseParams(eps, nu, T)
        j = JumpList(np.linspace(0, T, n + 2)[1:-1], np.full(n, 0.3))
        expected = -n * math.log(c) + T * SQRT_PI / eps * (c - 1.0)
        assert girsanov_log_weight(p, ConstantTilt(c, T), j) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_degenerate_weight(self):
        p = NoiseParams(0.5, ExponentialLight(), 1.0)
        with pytest.raises(DegenerateWeight):
            girsanov_log_weight(p, ConstantTilt(0.0, 1.0), JumpList(np.array([0.5]), np.array([0.2])))

    def test_martingale_constant_tilt(self):
        p = NoiseParams(0.5, ExponentialLight(), 1.0)
        g = ConstantTilt(2.0, 1.0)
        rng = np.random.default_rng(11)
        w = np.exp([girsanov_log_weight(p, g, simulate_tilted_prm(p, g, rng)) for _ in range(10**4)])
        assert abs(w.mean() - 1.0) < 3 * w.std() / math.sqrt(len(w))

    def test_martingale_grid_tilt_stopped(self):
        nu = ExponentialLight()
        p = NoiseParams(0.3, nu, 1.0)
        g = sign_tilt(nu, horizon=1.0, level=1.5)
        rng = np.random.default_rng(12)
        w = np.exp([girsanov_log_weight(p, g, simulate_tilted_prm(p, g, rng), stop_time=0.6) for _ in range(10**4)])
        assert abs(w.mean() - 1.0) < 3 * w.std() / math.sqrt(len(w))

    def test_importance_sampling_unbiased(self):
        # P(net positive jumps >= 3) under plain noise, estimated directly and with weights
        nu = ExponentialLight()
        p = NoiseParams(0.3, nu, 1.0)
        g = sign_tilt(nu, level=1.8)
        f = lambda j: float(np.sum(np.sign(j.marks[:, 0])) >= 3)
        rng = np.random.default_rng(13)
        direct = np.array([f(simulate_prm(p, rng)) for _ in range(10**4)])
        vals = []
        for _ in range(10**4):
            j = simulate_tilted_prm(p, g, rng)
            vals.append(f(j) * math.exp(girsanov_log_weight(p, g, j)))
        vals = np.array(vals)
        m1, s1 = direct.mean(), direct.std() / 100
        m2, s2 = vals.mean(), vals.std() / 100
        assert m1 - 3 * s1 <= m2 + 3 * s2 and m2 - 3 * s2 <= m1 + 3 * s1
