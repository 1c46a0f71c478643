import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levyexit import (
    ConfigurationError,
    ExitExperiment,
    ExponentialLight,
    Identity,
    SystemSpec,
    TCapPolicy,
    WholeSpace,
    cycle_diagnostic,
    exit_location_stats,
    importance_sampled_exit,
    run_exit_mc,
)
from levyexit.dynamics import ConstantCoefficient, PolynomialDrift
from levyexit.exitlab import (
    INVALID_FOR_MEAN,
    _geometric_chi2,
    bootstrap_ci,
    nondecreasing_within_ci,
    path_rng,
    simulate_exits,
)
from levyexit import report as rpt


def _exp(system, nu, **kw):
    kw.setdefault("n_paths", 150)
    kw.setdefault("eps_schedule", (0.5, 0.4))
    kw.setdefault("t_cap", 1e5)
    kw.setdefault("seed", 11)
    return ExitExperiment(system, nu, **kw)


# ---------------------------------------------------------------------------
# configuration


def test_schedule_must_decrease(benchmark, nu):
    with pytest.raises(ConfigurationError):
        _exp(benchmark, nu, eps_schedule=(0.3, 0.4))
    with pytest.raises(ConfigurationError):
        _exp(benchmark, nu, eps_schedule=(0.3, 0.3))


def test_minimum_path_count(benchmark, nu):
    with pytest.raises(ConfigurationError):
        _exp(benchmark, nu, n_paths=99)


def test_start_dimension_checked(benchmark, nu):
    with pytest.raises(ConfigurationError):
        _exp(benchmark, nu, x=(0.0, 0.0))


def test_t_cap_policy():
    p = TCapPolicy(factor=20.0, floor=50.0, ceiling=1e6)
    assert p(0.3, None) == 1e6
    assert p(0.3, 0.0) == 50.0
    assert p(0.3, 1.0) == pytest.approx(20.0 * math.exp(1.0 / 0.3))
    assert p(0.01, 1.0) == 1e6


def test_path_rng_streams():
    a = path_rng(5, 0, 3).random(4)
    assert np.array_equal(a, path_rng(5, 0, 3).random(4))
    assert not np.array_equal(a, path_rng(5, 1, 3).random(4))
    assert not np.array_equal(a, path_rng(5, 0, 4).random(4))


# ---------------------------------------------------------------------------
# exit Monte Carlo


def test_unbounded_domain_times_out_and_is_flagged(nu):
    system = SystemSpec(PolynomialDrift.linear(), ConstantCoefficient(1.0), WholeSpace(1))
    rep = run_exit_mc(_exp(system, nu, n_paths=100, eps_schedule=(0.4,), t_cap=5.0))
    row = rep.rows[0]
    assert row.timeout_fraction == 1.0
    assert row.invalid
    assert INVALID_FOR_MEAN in rep.flags and rep.invalid_for_mean
    # the truncated mean equals the cap when nothing exits
    assert row.mean == 5.0


def test_mean_exit_time_grows_as_noise_shrinks(benchmark, nu):
    rep = run_exit_mc(_exp(benchmark, nu, eps_schedule=(0.5, 0.4, 0.3)))
    means = [r.mean for r in rep.rows]
    assert means[0] < means[1] < means[2]
    for r in rep.rows:
        assert r.ci_lo <= r.mean <= r.ci_hi
        assert r.timeout_fraction == 0.0 and not r.invalid
        assert r.eps_ln_mean == pytest.approx(r.eps * math.log(r.mean))
        # no barrier: no window or location statistics
        assert math.isnan(r.window_prob) and math.isnan(r.concentration)
    assert rep.flags == [] and rep.spearman is None


def test_report_text_and_table(benchmark, nu):
    rep = run_exit_mc(_exp(benchmark, nu, n_paths=100))
    fields = rpt.loads(rep.to_text())
    assert fields["kind"] == "kramers"
    assert int(fields["rows.count"]) == 2
    row0 = rpt.parse_value(fields["rows.0"])
    assert row0[2] == rep.rows[0].mean
    lines = rep.table().splitlines()
    assert len(lines) == 3 and lines[0].startswith("eps,n,mean")


def test_worker_count_does_not_change_results(benchmark, nu):
    a = run_exit_mc(_exp(benchmark, nu, n_paths=100, workers=1))
    b = run_exit_mc(_exp(benchmark, nu, n_paths=100, workers=2))
    c = run_exit_mc(_exp(benchmark, nu, n_paths=100, workers=1))
    assert a.to_text() == b.to_text() == c.to_text()
    assert a.table() == b.table()


def test_seed_changes_results(benchmark, nu):
    a = run_exit_mc(_exp(benchmark, nu, n_paths=100, seed=1))
    b = run_exit_mc(_exp(benchmark, nu, n_paths=100, seed=2))
    assert a.rows[0].mean != b.rows[0].mean


def test_exit_points_lie_outside_domain(benchmark, nu):
    s = simulate_exits(_exp(benchmark, nu, n_paths=100), 1)
    assert s.exited.all()
    assert np.all(np.abs(s.points[:, 0]) >= 1.0)
    assert np.all(s.log_weights == 0.0)


def test_kramers_rows_with_barrier(benchmark, nu, benchmark_barrier):
    rep = run_exit_mc(_exp(benchmark, nu, n_paths=100, barrier=benchmark_barrier))
    assert rep.v_bar == benchmark_barrier.value
    assert rep.window_delta == pytest.approx(0.5 * benchmark_barrier.value)
    assert rep.symmetric and len(rep.z_star) == 2
    for r in rep.rows:
        assert 0.0 <= r.window_lo <= r.window_prob <= r.window_hi <= 1.0
        assert 0.0 <= r.conc_lo <= r.concentration <= r.conc_hi <= 1.0
    assert rep.spearman is not None and rep.trend_slope is not None


# ---------------------------------------------------------------------------
# exit location


def test_location_needs_barrier(benchmark, nu):
    with pytest.raises(ConfigurationError):
        exit_location_stats(_exp(benchmark, nu, n_paths=100), 0.25)


def test_location_infinite_delta_is_one(benchmark, nu, benchmark_barrier):
    loc = exit_location_stats(_exp(benchmark, nu, n_paths=100, barrier=benchmark_barrier), math.inf)
    assert loc.prob == [1.0, 1.0]
    assert loc.ci == [(1.0, 1.0), (1.0, 1.0)]
    assert loc.mode == "symmetric-pair"
    assert loc.nondecreasing


def test_location_mass_near_symmetric_pair(benchmark, nu, benchmark_barrier):
    exp = _exp(benchmark, nu, n_paths=200, barrier=benchmark_barrier)
    loc = exit_location_stats(exp, 0.25)
    # every exit is at one of the two boundary points, so only overshoot escapes the window
    assert all(p > 0.6 for p in loc.prob)
    narrow = exit_location_stats(exp, 0.05)
    assert all(a <= b for a, b in zip(narrow.prob, loc.prob))
    counts = loc.histograms[0]["counts"]
    assert counts.sum() == 200 and min(counts) > 50


# ---------------------------------------------------------------------------
# cycle ladder


@pytest.mark.parametrize("rho, rho_p", [(0.5, 0.5), (0.6, 0.5), (0.0, 0.5)])
def test_cycle_radii_validated(benchmark, nu, rho, rho_p):
    with pytest.raises(ConfigurationError):
        cycle_diagnostic(_exp(benchmark, nu, n_paths=100), rho, rho_p)


def test_cycle_success_probability_decreases(benchmark, nu):
    rows = cycle_diagnostic(_exp(benchmark, nu, n_paths=200, eps_schedule=(0.5, 0.4, 0.3), seed=3), 0.1, 0.5)
    q = [c.q_hat for c in rows]
    assert 0 < q[2] < q[1] < q[0] < 1
    for c in rows:
        assert c.timeout_fraction == 0.0
        assert c.attempts.min() >= 1
        assert c.mean_attempts == pytest.approx(1.0 / c.q_hat)
        assert c.wald_ok and c.geometric_ok


def test_geometric_chi2_detects_non_geometric():
    rng = np.random.default_rng(0)
    att = rng.geometric(0.3, size=2000)
    _, dof, p = _geometric_chi2(att, len(att) / att.sum())
    assert dof >= 1 and p > 0.01
    # a point mass at three attempts is far from geometric
    fixed = np.full(2000, 3)
    _, dof, p = _geometric_chi2(fixed, 1 / 3)
    assert dof >= 1 and p < 1e-6


def test_geometric_chi2_degenerate_cases():
    assert _geometric_chi2(np.ones(50, dtype=int), 1.0) == (0.0, 0, 1.0)
    assert _geometric_chi2(np.empty(0, dtype=int), 0.5) == (0.0, 0, 1.0)


# ---------------------------------------------------------------------------
# importance sampling


def test_direct_estimate_needs_horizon(benchmark, nu):
    with pytest.raises(ConfigurationError):
        importance_sampled_exit(_exp(benchmark, nu, n_paths=100), None)


def test_identity_tilt_matches_direct(benchmark, nu):
    exp = _exp(benchmark, nu, n_paths=200, eps_schedule=(0.4,))
    direct = importance_sampled_exit(exp, None, 0, horizon=2.0)
    ident = importance_sampled_exit(exp, Identity(2.0), 0)
    assert direct.estimate == ident.estimate
    assert direct.std_error == ident.std_error
    assert ident.ess == 200 and ident.reliable
    assert 0 < direct.estimate < 1
    lo, hi = direct.ci()
    assert hi - lo == pytest.approx(6 * direct.std_error)


# ---------------------------------------------------------------------------
# bootstrap and monotonicity helpers


def _mean(a):
    return a.mean(axis=1)


def test_bootstrap_ci_covers_mean():
    rng = np.random.default_rng(1)
    x = rng.normal(2.0, 1.0, size=400)
    lo, hi = bootstrap_ci(x, _mean, np.random.default_rng(2))
    assert lo < x.mean() < hi
    # roughly the normal-theory width
    assert (hi - lo) == pytest.approx(2 * 1.96 / math.sqrt(400), rel=0.2)


def test_bootstrap_ci_deterministic_and_degenerate():
    x = np.arange(100.0)
    a = bootstrap_ci(x, _mean, np.random.default_rng(3))
    assert a == bootstrap_ci(x, _mean, np.random.default_rng(3))
    assert bootstrap_ci(np.ones(100), _mean, np.random.default_rng(3)) == (1.0, 1.0)


def test_nondecreasing_within_ci_examples():
    assert nondecreasing_within_ci([0.5, 0.6], [0.4, 0.5], [0.6, 0.7])
    # a dip covered by overlapping intervals still counts
    assert nondecreasing_within_ci([0.6, 0.55], [0.5, 0.45], [0.7, 0.65])
    assert not nondecreasing_within_ci([0.9, 0.2], [0.85, 0.15], [0.95, 0.25])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.floats(0, 0.5))
def test_sorted_values_always_nondecreasing(values, w):
    v = sorted(values)
    assert nondecreasing_within_ci(v, [x - w for x in v], [x + w for x in v])
