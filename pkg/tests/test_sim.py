import numpy as np
import pytest

from ctmboost.sim import (
    SimStudyConfig,
    covariate_grid,
    hvc_response,
    hvc_oracle,
    mad_surface,
    mad_table,
    replicate_study,
    replication_seeds,
    simulate_hvc,
    true_cdf_hvc,
    true_quantile_hvc,
)


def test_true_cdf_values():
    assert float(true_cdf_hvc(0.0, 0.0, 1.0)) == pytest.approx(0.691462, abs=1e-6)
    assert float(true_cdf_hvc(0.5, 1.0, 1.0)) == pytest.approx(0.5, abs=1e-15)
    assert float(true_quantile_hvc(0.5, 1.0, 0.5)) == pytest.approx(1.0)


def test_oracle_self_consistency():
    rng = np.random.default_rng(0)
    x1, x2 = 0.3, -0.7
    y = (x2 + rng.standard_normal(100_000)) / (x1 + 0.5)
    v = np.sort(y)
    ecdf = np.arange(1, v.size + 1) / v.size
    assert np.max(np.abs(ecdf - true_cdf_hvc(x1, x2, v))) <= 0.01


def test_response_mean():
    d = simulate_hvc(200_000, seed=1)
    # E[x2] = 0 and E[Z] = 0 independently of x1
    assert abs(d.y.mean()) < 0.02


def binned_variance(x2, y, bins=40):
    """Pooled within-bin variance of ``y`` over equal-width ``x2`` bins."""
    idx = np.minimum(((x2 + 2) / 4 * bins).astype(int), bins - 1)
    ss = 0.0
    for b in range(bins):
        yb = y[idx == b]
        ss += ((yb - yb.mean()) ** 2).sum()
    return ss / (y.size - bins)


@pytest.mark.parametrize("x1,target", [(0.0, 4.0), (1.0, 1 / 2.25)])
def test_variance_endpoints(x1, target):
    rng = np.random.default_rng(2)
    x2 = rng.uniform(-2, 2, 100_000)
    y = hvc_response(np.full(x2.size, x1), x2, rng)
    assert binned_variance(x2, y) == pytest.approx(target, rel=0.05)


def test_conditional_mean_example():
    rng = np.random.default_rng(4)
    y = hvc_response(np.full(100_000, 0.5), np.full(100_000, 1.0), rng)
    assert y.mean() == pytest.approx(1.0, abs=0.02)


def test_response_uses_same_stream():
    d = simulate_hvc(30, seed=9)
    rng = np.random.default_rng(9)
    x1, x2 = rng.uniform(0, 1, 30), rng.uniform(-2, 2, 30)
    np.testing.assert_array_equal(hvc_response(x1, x2, rng), d.y)


def test_noise_columns_do_not_change_informative_data():
    a = simulate_hvc(50, 0, seed=3)
    b = simulate_hvc(50, 4, seed=3)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.column("x1"), b.column("x1"))
    assert set(b.covariates) == {"x1", "x2", "z1", "z2", "z3", "z4"}


def test_covariate_grid():
    X = covariate_grid(10, 2)
    assert X["x1"].size == 100
    assert X["x1"].min() == 0 and X["x2"].max() == 2
    np.testing.assert_array_equal(X["z2"], 0.5)


def test_mad_examples():
    X = covariate_grid(3)
    v = np.linspace(-4, 4, 9)
    s = mad_surface(hvc_oracle, hvc_oracle, X, v)
    assert s.max == 0
    shifted = mad_surface(lambda X, v: hvc_oracle(X, v) + 0.01, hvc_oracle, X, v)
    assert shifted.median == pytest.approx(0.01)
    half = mad_surface(lambda X, v: np.full((v.size, X["x1"].size), 0.5), hvc_oracle, X, v)
    assert half.min > 0


def test_seeds_deterministic():
    assert replication_seeds(7, 3) == replication_seeds(7, 3)
    assert len(set(replication_seeds(7, 5))) == 5


def test_tiny_study_deterministic():
    cfg = SimStudyConfig(N=60, replications=2, noise_vars=(0, 1), max_iterations=40, bootstrap=2, knots=6)
    a = replicate_study(cfg)
    b = replicate_study(cfg)
    assert mad_table(a) == mad_table(b)
    assert [r.p for r in a] == [0, 0, 1, 1]
    assert all(r.mad is not None and r.mad.median < 0.2 for r in a)
