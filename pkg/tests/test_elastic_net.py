"""Coordinate descent solver checked against independent routes:
soft-thresholding against 1-D grid minimization, ridge against its linear
algebra closed form, LASSO against dense coefficient-grid search, plus
KKT certification and the standardization contract.
"""

import numpy as np
import pytest

from claimtree.data import standardize_matrix
from claimtree.elastic_net import (
    LAMBDA_MIN,
    PenaltySpec,
    RankDeficiencyError,
    coordinate_descent,
    enet_objective,
    fit_elastic_net,
    fit_ols,
    fit_ridge,
    kkt_violation,
    lambda_max,
    lambda_path_cv,
    ridge_closed_form,
    soft_threshold,
)


def standardized_problem(rng, n, p, noise=1.0):
    X = rng.normal(size=(n, p)) @ (np.eye(p) + 0.3 * rng.normal(size=(p, p)))
    beta = rng.normal(size=p) * 2
    y = X @ beta + noise * rng.normal(size=n)
    Xs, _ = standardize_matrix(X)
    return Xs, y - y.mean()


def grid_minimize_objective(X, y, lam, alpha=1.0, steps=41, zooms=4):
    """Dense coefficient-grid minimization of the penalized objective,
    zooming in around the incumbent. Independent of the solver."""
    n, p = X.shape
    b_ols = np.linalg.lstsq(X, y, rcond=None)[0]
    half = np.maximum(2.0 * np.abs(b_ols), 1.0)
    lo, hi = -half, half
    best = np.zeros(p)
    best_J = np.inf
    for _ in range(zooms):
        axes = [np.linspace(lo[j], hi[j], steps) for j in range(p)]
        mesh = np.meshgrid(*axes, indexing="ij")
        B = np.stack([g.ravel() for g in mesh], axis=1)
        R = y[:, None] - X @ B.T
        J = (
            (R**2).sum(axis=0) / (2.0 * n)
            + lam * (1.0 - alpha) / 2.0 * (B**2).sum(axis=1)
            + lam * alpha * np.abs(B).sum(axis=1)
        )
        k = int(np.argmin(J))
        if J[k] < best_J:
            best_J = float(J[k])
            best = B[k]
        width = (hi - lo) / (steps - 1)
        lo = best - 2.0 * width
        hi = best + 2.0 * width
    return best, best_J


class TestSoftThreshold:
    def test_worked_cases(self):
        assert soft_threshold(3.0, 2.0) == 2.0
        assert soft_threshold(-3.0, 2.0) == -2.0
        assert soft_threshold(0.5, 2.0) == 0.0

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(1.0, -0.5)

    def test_matches_grid_minimization(self):
        """Analytic solution vs argmin of (b-t)^2 + lam|b| on a fine grid."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            t = float(rng.uniform(-5, 5))
            lam = float(rng.uniform(0, 5))
            span = abs(t) + lam + 1.0
            grid = np.arange(-span, span, 1e-4)
            obj = (grid - t) ** 2 + lam * np.abs(grid)
            assert abs(soft_threshold(t, lam) - grid[np.argmin(obj)]) <= 1e-4

    def test_odd_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            t = float(rng.uniform(-4, 4))
            lam = float(rng.uniform(0, 4))
            assert soft_threshold(-t, lam) == -soft_threshold(t, lam)


class TestRidge:
    def test_identity_design_closed_form(self):
        """X = I, y = (2,4), lam = 1: (X'X + I)^-1 X'y = (1, 2)."""
        beta = ridge_closed_form(np.eye(2), np.array([2.0, 4.0]), 1.0)
        np.testing.assert_allclose(beta, [1.0, 2.0])

    def test_small_lambda_approaches_ols(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 3))
        y = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.normal(size=60)
        ols = fit_ols(X, y)
        ridge = fit_ridge(X, y, 1e-10)
        np.testing.assert_allclose(ridge.coefficients, ols.coefficients, atol=1e-6)

    def test_large_lambda_shrinks_to_mean(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 3))
        y = X @ np.array([1.0, 2.0, -1.0]) + rng.normal(size=50)
        ridge = fit_ridge(X, y, 1e12)
        np.testing.assert_allclose(ridge.coefficients, 0.0, atol=1e-8)
        assert ridge.intercept == pytest.approx(y.mean(), abs=1e-8)

    def test_coordinate_descent_alpha0_matches_closed_form(self):
        """CD at alpha=0 with lam/n equals the (X'X + lam I)^-1 X'y solution."""
        rng = np.random.default_rng(4)
        for _ in range(25):
            n = int(rng.integers(12, 51))
            p = int(rng.integers(1, 9))
            Xs, yc = standardized_problem(rng, n, p)
            lam = float(rng.uniform(0.01, 5.0))
            closed = ridge_closed_form(Xs, yc, lam)
            res = coordinate_descent(Xs, yc, alpha=0.0, lam=lam / n)
            assert res.converged
            np.testing.assert_allclose(res.beta, closed, atol=1e-6)


class TestOls:
    def test_exact_interpolation(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 3))
        y = 2.0 + X @ np.array([1.0, -1.0, 3.0])
        fit = fit_ols(X, y)
        np.testing.assert_allclose(fit.predict(X), y, atol=1e-9)
        np.testing.assert_allclose(fit.coefficients, [1.0, -1.0, 3.0], atol=1e-9)

    def test_single_standardized_column_slope(self):
        x = np.linspace(-1, 1, 20)[:, None]
        Xs, _ = standardize_matrix(x)
        fit = fit_ols(Xs, 2.0 * Xs[:, 0])
        assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-10)

    def test_duplicated_column_is_rank_deficient(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=30)
        X = np.column_stack([x, x])
        with pytest.raises(RankDeficiencyError):
            fit_ols(X, rng.normal(size=30))

    def test_more_columns_than_rows_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(RankDeficiencyError):
            fit_ols(rng.normal(size=(5, 8)), rng.normal(size=5))

    def test_normal_equations_gradient_zero(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(80, 4))
        y = X @ rng.normal(size=4) + rng.normal(size=80)
        fit = fit_ols(X, y)
        resid = y - fit.predict(X)
        np.testing.assert_allclose(X.T @ resid, 0.0, atol=1e-8)
        assert resid.mean() == pytest.approx(0.0, abs=1e-10)


class TestElasticNet:
    def test_alpha0_matches_fit_ridge(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(40, 4))
        y = X @ np.array([1.0, 0.0, -2.0, 0.5]) + 0.3 * rng.normal(size=40)
        lam = 0.8
        enet = fit_elastic_net(X, y, PenaltySpec(alpha=0.0, lam=lam / 40))
        ridge = fit_ridge(X, y, lam)
        np.testing.assert_allclose(enet.coefficients, ridge.coefficients, atol=1e-6)

    def test_single_predictor_lasso_is_soft_thresholded_ols(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=50)[:, None]
        y = 1.5 * x[:, 0] + 0.2 * rng.normal(size=50)
        Xs, _ = standardize_matrix(x)
        yc = y - y.mean()
        rho = float(Xs[:, 0] @ yc)  # OLS slope on the standardized design
        lam = 0.02
        res = coordinate_descent(Xs, yc, alpha=1.0, lam=lam)
        # equality up to the rounding of sum(x^2) = 1 in the standardization
        assert res.beta[0] == pytest.approx(soft_threshold(rho, 2.0 * 50 * lam), rel=1e-12)
        # and it minimizes the penalized objective (1-D grid oracle)
        grid = np.arange(-2 * abs(rho), 2 * abs(rho), 1e-5)
        obj = ((yc[:, None] - Xs @ grid[None, :]) ** 2).sum(axis=0) / (2 * 50) + lam * np.abs(grid)
        assert abs(res.beta[0] - grid[np.argmin(obj)]) <= 1e-4

    def test_large_lambda_zeroes_everything(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(60, 5))
        y = X @ rng.normal(size=5) + rng.normal(size=60)
        Xs, _ = standardize_matrix(X)
        yc = y - y.mean()
        lam = lambda_max(Xs, yc, alpha=1.0) * 1.001
        fit = fit_elastic_net(X, y, PenaltySpec(alpha=1.0, lam=lam))
        np.testing.assert_array_equal(fit.coefficients, 0.0)

    def test_objective_nonincreasing_over_sweeps(self):
        rng = np.random.default_rng(12)
        for alpha in (0.0, 0.5, 1.0):
            Xs, yc = standardized_problem(rng, 50, 6)
            res = coordinate_descent(Xs, yc, alpha=alpha, lam=0.01, record_objective=True)
            diffs = np.diff(res.objectives)
            assert (diffs <= 1e-12).all()

    def test_kkt_certification(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = int(rng.integers(20, 80))
            p = int(rng.integers(2, 7))
            Xs, yc = standardized_problem(rng, n, p)
            alpha = float(rng.uniform(0.1, 1.0))
            lam = float(rng.uniform(0.001, 0.2))
            res = coordinate_descent(Xs, yc, alpha=alpha, lam=lam, tol=1e-7)
            assert res.converged
            assert kkt_violation(Xs, yc, res.beta, alpha, lam) <= 1e-6

    @pytest.mark.parametrize("alpha", [1.0, 0.5])
    def test_grid_oracle_small_p(self, alpha):
        """CD solution matches dense grid search on the objective, p <= 3."""
        rng = np.random.default_rng(14)
        for _ in range(10):
            n = int(rng.integers(15, 40))
            p = int(rng.integers(1, 4))
            Xs, yc = standardized_problem(rng, n, p)
            lam = float(rng.uniform(0.005, 0.3))
            res = coordinate_descent(Xs, yc, alpha=alpha, lam=lam)
            _, grid_J = grid_minimize_objective(Xs, yc, lam, alpha=alpha)
            cd_J = enet_objective(Xs, yc, res.beta, alpha, lam)
            assert abs(cd_J - grid_J) <= 1e-3

    def test_nonconvergence_flagged(self):
        rng = np.random.default_rng(15)
        Xs, yc = standardized_problem(rng, 40, 5)
        with pytest.warns(RuntimeWarning, match="did not converge"):
            fit = fit_elastic_net(
                rng.normal(size=(40, 5)), yc + 1.0, PenaltySpec(alpha=0.3, lam=1e-9), max_iter=1
            )
        assert not fit.converged

    def test_destandardized_predictions_match_standardized_path(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(70, 4)) * np.array([1.0, 10.0, 0.1, 100.0]) + 5.0
        y = X @ np.array([0.5, -0.03, 2.0, 0.001]) + rng.normal(size=70)
        fit = fit_elastic_net(X, y, PenaltySpec(alpha=0.7, lam=0.01))
        direct = fit.predict(X)
        Xs = fit.standardization.apply(X)
        via_std = y.mean() + Xs @ fit.standardized_coefficients()
        np.testing.assert_allclose(direct, via_std, atol=1e-8)


class TestLambdaPath:
    def test_pure_noise_prefers_heavy_shrinkage(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(150, 6))
        y = rng.normal(size=150)  # no signal at all
        path = lambda_path_cv(X, y, alpha=1.0, k=5, seed=0)
        assert path.lambda_min >= path.lambdas.max() * 0.05

    def test_exact_signal_prefers_no_shrinkage(self):
        rng = np.random.default_rng(18)
        X = rng.normal(size=(120, 4))
        y = X @ np.array([2.0, -1.0, 0.5, 3.0])  # noiseless
        path = lambda_path_cv(X, y, alpha=1.0, k=5, seed=0)
        assert path.lambda_min <= path.lambdas.max() * 1e-3

    def test_constant_y_returns_zero_fit(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(30, 3))
        y = np.full(30, 7.0)
        path = lambda_path_cv(X, y, alpha=1.0, k=3, seed=0)
        fit = fit_elastic_net(X, y, PenaltySpec(alpha=1.0, lam=max(path.lambda_min, 0.0)))
        np.testing.assert_array_equal(fit.coefficients, 0.0)
        assert fit.intercept == pytest.approx(7.0)

    def test_grid_shape(self):
        rng = np.random.default_rng(20)
        X = rng.normal(size=(80, 3))
        y = X @ np.array([1.0, 0.0, -1.0]) + rng.normal(size=80)
        path = lambda_path_cv(X, y, alpha=0.5, k=4, seed=1)
        assert path.lambdas.size == 100
        np.testing.assert_allclose(path.lambdas.min(), path.lambdas.max() * 1e-4)
        assert path.cv_mean.shape == path.lambdas.shape

    def test_lambda_min_rule_resolves_in_fit(self):
        rng = np.random.default_rng(21)
        X = rng.normal(size=(60, 4))
        y = X @ np.array([1.0, 0.0, 0.0, -2.0]) + 0.1 * rng.normal(size=60)
        fit = fit_elastic_net(X, y, PenaltySpec(alpha=1.0, lam=LAMBDA_MIN), cv_folds=4, cv_seed=2)
        assert isinstance(fit.penalty.lam, float)
        assert fit.converged


class TestPenaltySpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            PenaltySpec(alpha=1.5, lam=0.1)
        with pytest.raises(ValueError):
            PenaltySpec(alpha=0.5, lam=-0.1)
        with pytest.raises(ValueError):
            PenaltySpec(alpha=0.5, lam="lambda.max")
        assert PenaltySpec(alpha=1.0, lam=LAMBDA_MIN).lam == LAMBDA_MIN
