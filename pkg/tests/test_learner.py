import numpy as np
import pytest

from ctmboost.basis import BasisSpec, PenaltySpec, difference_matrix
from ctmboost.errors import CalibrationError, SolveError
from ctmboost.learner import (
    LearnerWork,
    TensorLearner,
    calibrate_lambda,
    combined_penalty,
    learner_rss,
    precompute,
    predict_increment,
    ridge_fit,
)

DIFF2 = PenaltySpec("difference", order=2)
DIFF1 = PenaltySpec("difference", order=1)


def expanded_design(Bx, B0):
    """Rows ordered observation-major, matching the lattice U[grid, obs]."""
    N, n = Bx.shape[0], B0.shape[0]
    X = np.zeros((N * n, Bx.shape[1] * B0.shape[1]))
    for i in range(N):
        for k in range(n):
            X[i * n + k] = np.kron(Bx[i], B0[k])
    return X


def brute_force(Bx, B0, w, U, P):
    X = expanded_design(Bx, B0)
    W = np.repeat(w, B0.shape[0])
    u = U.T.ravel()  # obs-major, like the design rows
    beta = np.linalg.solve(X.T @ (W[:, None] * X) + P, X.T @ (W * u))
    rss = float(np.sum(W * (u - X @ beta) ** 2))
    return beta, rss


def small_learner(Kx, K0, rng, xpen=DIFF1, ypen=DIFF1):
    xb = BasisSpec("bspline", degree=Kx - 2, num_interior_knots=1, domain=(0, 1)) if Kx > 2 else BasisSpec("linear", domain=(0, 1))
    yb = BasisSpec("bspline", degree=K0 - 2, num_interior_knots=1, domain=(-2, 2)) if K0 > 2 else BasisSpec("linear", domain=(-2, 2))
    return TensorLearner("t", xb, yb, xpen, ypen, covariate="x")


def test_expanded_and_kronecker_agree_seven_by_five():
    rng = np.random.default_rng(0)
    L = small_learner(3, 3, rng)
    x = rng.uniform(0, 1, 7)
    grid = np.linspace(-2, 2, 5)
    w = np.full(7, 1 / 7)
    work = precompute(L, x, grid, w)
    U = rng.normal(size=(5, 7))
    beta = ridge_fit(work, U, 0.5)
    ref, rss = brute_force(work.B_x, work.B_0, w, U, 0.5 * work.penalty)
    np.testing.assert_allclose(beta, ref, atol=1e-8)
    assert learner_rss(work, beta, U) == pytest.approx(rss, abs=1e-10)


@pytest.mark.parametrize("seed", range(50))
def test_kronecker_brute_force_random(seed):
    rng = np.random.default_rng(seed)
    Kx, K0 = rng.integers(2, 5, size=2)
    while Kx * K0 > 16:
        K0 -= 1
    N = int(rng.integers(max(Kx, 3), 11))
    n = int(rng.integers(K0, max(K0, 100 // N) + 1))
    L = small_learner(int(Kx), int(K0), rng)
    x = rng.uniform(0, 1, N)
    grid = np.sort(rng.uniform(-2, 2, n))
    w = rng.uniform(0, 2, N)
    work = precompute(L, x, grid, w)
    U = rng.normal(size=(n, N))
    lam = 10 ** rng.uniform(-2, 2)
    beta = ridge_fit(work, U, lam)
    ref, rss = brute_force(work.B_x, work.B_0, w, U, lam * work.penalty)
    np.testing.assert_allclose(beta, ref, atol=1e-8, rtol=0)
    assert learner_rss(work, beta, U) == pytest.approx(rss, abs=1e-10)
    # normal-equation residual
    S = np.kron(work.A_x, work.A_0) + lam * work.penalty
    rhs = work.rhs(U)
    assert np.max(np.abs(S @ beta - rhs)) <= 1e-8 * (1 + np.max(np.abs(rhs)))


def test_zero_gradient_gives_zero_beta():
    rng = np.random.default_rng(1)
    L = small_learner(3, 3, rng)
    work = precompute(L, rng.uniform(0, 1, 8), np.linspace(-2, 2, 6), np.full(8, 1 / 8))
    beta = ridge_fit(work, np.zeros((6, 8)), 1.0)
    np.testing.assert_array_equal(beta, 0)
    assert learner_rss(work, beta, np.zeros((6, 8))) == 0


def test_lambda_zero_is_least_squares_and_optimal():
    rng = np.random.default_rng(2)
    L = small_learner(2, 2, rng)
    x = rng.uniform(0, 1, 9)
    grid = np.linspace(-2, 2, 6)
    w = np.full(9, 1 / 9)
    work = precompute(L, x, grid, w)
    U = rng.normal(size=(6, 9))
    beta = ridge_fit(work, U, 0.0)
    X = expanded_design(work.B_x, work.B_0)
    ref = np.linalg.lstsq(X, U.T.ravel(), rcond=None)[0]
    np.testing.assert_allclose(beta, ref, atol=1e-10)
    best = learner_rss(work, beta, U)
    for _ in range(20):
        assert best <= learner_rss(work, rng.normal(size=beta.size), U)


def test_singular_lambda_zero_raises():
    L = TensorLearner("t", BasisSpec("bspline", 3, 5, domain=(0, 1)), BasisSpec("intercept"),
                      DIFF2, PenaltySpec(), covariate="x")
    work = precompute(L, np.array([0.1, 0.2]), np.array([0.0, 1.0]), np.ones(2))
    with pytest.raises(SolveError, match="positive"):
        ridge_fit(work, np.ones((2, 2)), 0.0)


def test_precompute_stores_marginals_only():
    rng = np.random.default_rng(3)
    L = TensorLearner("t", BasisSpec("bspline", domain=(0, 1)), BasisSpec("bspline", domain=(-3, 3)),
                      DIFF2, DIFF2, covariate="x")
    work = precompute(L, rng.uniform(0, 1, 100), np.linspace(-3, 3, 50), np.full(100, 0.01))
    assert work.B_x.size + work.B_0.size == 100 * 24 + 50 * 24
    assert work._gram is None


def test_intercept_cross_products():
    L = TensorLearner("t", BasisSpec("intercept"), BasisSpec("intercept"))
    w = np.array([0.2, 0.3, 0.4])
    work = precompute(L, None, np.array([1.0]), w)
    assert work.A_x[0, 0] == pytest.approx(w.sum())
    assert work.A_0[0, 0] == 1.0


def dense_df(work, lam):
    A = np.kron(work.A_x, work.A_0)
    M = np.linalg.solve(A + lam * work.penalty, A)
    return float(np.sum(np.linalg.eigvals(M).real))


def test_df_full_rank_lambda_zero():
    rng = np.random.default_rng(5)
    L = small_learner(3, 3, rng)
    work = precompute(L, rng.uniform(0, 1, 30), np.linspace(-2, 2, 12), np.full(30, 1 / 30))
    assert work.degrees_of_freedom(0.0) == 9


def test_df_decreasing_in_lambda():
    rng = np.random.default_rng(6)
    for _ in range(5):
        L = small_learner(4, 4, rng, DIFF2, DIFF2)
        work = precompute(L, rng.uniform(0, 1, 25), np.linspace(-2, 2, 10), rng.uniform(0.1, 1, 25))
        lams = 10.0 ** np.linspace(-6, 6, 40)
        dfs = [work.degrees_of_freedom(l) for l in lams]
        assert np.all(np.diff(dfs) <= 1e-12)


def random_pd(K, rng):
    A = rng.normal(size=(K, K))
    return A @ A.T + 0.1 * np.eye(K)


def test_calibration_k4_second_differences_df4():
    rng = np.random.default_rng(8)
    L = small_learner(4, 4, rng, DIFF2, DIFF2)
    work = LearnerWork(L, np.eye(4), np.eye(4), np.ones(4))
    work.A_x, work.A_0 = random_pd(4, rng), random_pd(4, rng)
    lam = calibrate_lambda(work, 4.0)
    assert abs(dense_df(work, lam) - 4.0) <= 1e-6


@pytest.mark.parametrize("df", [4.5, 6.0, 10.0])
def test_calibration_hits_target(df):
    rng = np.random.default_rng(9)
    L = TensorLearner("t", BasisSpec("bspline", 3, 5, domain=(0, 1)), BasisSpec("bspline", 3, 4, domain=(-1, 1)),
                      DIFF2, DIFF2, covariate="x")
    work = precompute(L, rng.uniform(0, 1, 60), np.linspace(-1, 1, 30), np.full(60, 1 / 60))
    lam = calibrate_lambda(work, df)
    assert abs(dense_df(work, lam) - df) <= 1e-6


def test_calibration_unattainable_reports_range():
    rng = np.random.default_rng(10)
    L = small_learner(3, 3, rng)
    work = precompute(L, rng.uniform(0, 1, 30), np.linspace(-2, 2, 10), np.full(30, 1 / 30))
    with pytest.raises(CalibrationError) as exc:
        calibrate_lambda(work, 20.0)
    lo, hi = exc.value.attainable
    assert hi == pytest.approx(9, abs=1e-6)
    assert lo == pytest.approx(1, abs=1e-6)


def test_penalty_reduces_roughness():
    rng = np.random.default_rng(11)
    for _ in range(5):
        L = small_learner(4, 4, rng, DIFF2, DIFF2)
        work = precompute(L, rng.uniform(0, 1, 20), np.linspace(-2, 2, 9), np.full(20, 0.05))
        U = rng.normal(size=(9, 20))
        rough = []
        for lam in 10.0 ** np.linspace(-3, 3, 13):
            b = ridge_fit(work, U, lam)
            rough.append(b @ work.penalty @ b)
        assert np.all(np.diff(rough) <= 1e-10 * (1 + max(rough)))


def test_combined_penalty_symmetric_psd():
    P = combined_penalty(difference_matrix(5, 2).T @ difference_matrix(5, 2), np.eye(3) * 0)
    np.testing.assert_allclose(P, P.T)
    assert np.linalg.eigvalsh(P).min() >= -1e-10


def test_predict_intercept_learner_is_constant():
    L = TensorLearner("c", BasisSpec("intercept"), BasisSpec("intercept"))
    np.testing.assert_array_equal(predict_increment(L, [2.5], None, [-1.0, 0.0, 3.0]), 2.5)


def test_predict_linear_by_linear():
    L = TensorLearner("l", BasisSpec("linear", domain=(-5, 5)), BasisSpec("linear", domain=(-5, 5)), covariate="x")
    g = np.array([0.3, -1.2, 0.7, 2.0])
    x = np.array([-1.0, 0.5, 2.0])
    v = np.array([1.5, -2.0, 0.25])
    np.testing.assert_allclose(predict_increment(L, g, x, v), g[0] + g[1] * v + g[2] * x + g[3] * x * v, atol=1e-14)


def test_predict_matches_lattice():
    rng = np.random.default_rng(12)
    L = TensorLearner("t", BasisSpec("bspline", 3, 4, domain=(0, 1)), BasisSpec("bspline", 2, 3, domain=(-1, 1)),
                      DIFF2, DIFF2, covariate="x")
    x = rng.uniform(0, 1, 6)
    grid = np.linspace(-1, 1, 5)
    work = precompute(L, x, grid, np.ones(6))
    beta = rng.normal(size=L.size)
    F = work.fitted(beta)
    for k in range(5):
        np.testing.assert_allclose(predict_increment(L, beta, x, np.full(6, grid[k])), F[k], atol=1e-12)


def test_df_floor_is_penalty_null_space():
    rng = np.random.default_rng(13)
    spline = BasisSpec("bspline", 3, 20, domain=(-3, 3))
    cases = [
        (TensorLearner("s", BasisSpec("bspline", 3, 20, domain=(0, 1)), spline, DIFF2, DIFF2, covariate="x"),
         rng.uniform(0, 1, 200), 4),
        (TensorLearner("d", BasisSpec("dummy", levels=("a", "b", "c")), spline, PenaltySpec(), DIFF2,
                       covariate="g"), rng.choice(["a", "b", "c"], 200), 6),
    ]
    for L, x, null in cases:
        work = precompute(L, x, np.linspace(-3, 3, 100), np.full(200, 1 / 200))
        dfs = [work.degrees_of_freedom(lam) for lam in 10.0 ** np.arange(0, 21, 2)]
        assert np.all(np.diff(dfs) <= 1e-12)
        assert dfs[-1] == pytest.approx(null, abs=1e-9)
        with pytest.raises(CalibrationError) as exc:
            calibrate_lambda(work, null - 2.0)
        assert exc.value.attainable[0] == pytest.approx(null, abs=1e-6)
