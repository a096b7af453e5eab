"""Least-squares regression with ridge, LASSO and elastic net penalties.

The solver is cyclic coordinate descent with soft-thresholding, run on
columns standardized to mean 0 and sum of squares 1 with the response
centered (the intercept is never penalized). For a design standardized
that way the penalized objective is

    J(b) = (1/2n) * ||y - X b||^2
           + lam * ((1 - alpha)/2 * sum(b_j^2) + alpha * sum(|b_j|))

so ``lam`` lives on the mean-squared-error scale and is comparable across
node sizes. The textbook ridge closed form (X'X + lam I)^-1 X'y minimizes
the unnormalized ``||y - Xb||^2 + lam ||b||^2`` instead; the two scales
are related by ``ridge lam = n * elastic-net lam at alpha = 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Standardization, standardize_matrix

LAMBDA_MIN = "lambda.min"


class RankDeficiencyError(np.linalg.LinAlgError):
    """Normal equations too ill-conditioned for an unpenalized fit."""


@dataclass(frozen=True)
class PenaltySpec:
    """Elastic net mixing weight alpha and penalty size.

    alpha = 1 is the pure LASSO, alpha = 0 pure ridge. ``lam`` is either a
    non-negative float or the string "lambda.min", which selects the value
    minimizing k-fold cross-validated error along the penalty path.
    """

    alpha: float
    lam: float | str

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if isinstance(self.lam, str):
            if self.lam != LAMBDA_MIN:
                raise ValueError(f"unknown lambda rule {self.lam!r}")
        elif self.lam < 0:
            raise ValueError("lambda must be >= 0")


@dataclass
class LinearFit:
    """Fitted linear model, reported on the original feature scale.

    ``coefficients`` aligns with ``feature_names``. The standardization
    used at fit time is kept so predictions can be reproduced in either
    parametrization.
    """

    intercept: float
    coefficients: np.ndarray
    feature_names: list[str]
    standardization: Standardization | None = None
    penalty: PenaltySpec | None = None
    converged: bool = True
    iterations: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.intercept + X @ self.coefficients

    def standardized_coefficients(self) -> np.ndarray:
        """Coefficients in the standardized design space."""
        if self.standardization is None:
            return self.coefficients.copy()
        return self.coefficients * self.standardization.scale


def soft_threshold(t: float, lam: float) -> float:
    """Minimizer of (b - t)^2 + lam |b|: shrink t by lam/2, truncate at 0."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if t > lam / 2.0:
        return t - lam / 2.0
    if t < -lam / 2.0:
        return t + lam / 2.0
    return 0.0


def ridge_closed_form(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (X'X + lam I) b = X'y directly. No intercept, no scaling."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    return np.linalg.solve(X.T @ X + lam * np.eye(p), X.T @ y)


def enet_objective(X, y, beta, alpha, lam) -> float:
    """Penalized objective J(b) on a standardized design (see module docs)."""
    r = y - X @ beta
    n = y.shape[0]
    penalty = lam * ((1.0 - alpha) / 2.0 * float(beta @ beta) + alpha * float(np.abs(beta).sum()))
    return float(r @ r) / (2.0 * n) + penalty


def kkt_violation(X, y, beta, alpha, lam) -> float:
    """Largest violation of the subgradient optimality conditions of J."""
    n = y.shape[0]
    r = y - X @ beta
    grad_smooth = -(X.T @ r) / n + lam * (1.0 - alpha) * beta
    thresh = lam * alpha
    worst = 0.0
    for j in range(beta.shape[0]):
        if beta[j] != 0.0:
            worst = max(worst, abs(grad_smooth[j] + thresh * np.sign(beta[j])))
        else:
            worst = max(worst, max(abs(grad_smooth[j]) - thresh, 0.0))
    return worst


@dataclass
class CDResult:
    beta: np.ndarray
    converged: bool
    sweeps: int
    objectives: list[float] = field(default_factory=list)


def coordinate_descent(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float,
    lam: float,
    tol: float = 1e-7,
    max_iter: int = 10_000,
    beta0: np.ndarray | None = None,
    record_objective: bool = False,
) -> CDResult:
    """Cyclic coordinate descent on a standardized design.

    Requires columns with sum of squares 1 (the per-coordinate quadratic
    weight then collapses to a constant) and a centered response. Starts
    from zero, sweeps coordinates in order and stops when the largest
    coefficient change in a sweep drops below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    resid = y - X @ beta
    shrink = 2.0 * n * lam * alpha
    denom = 1.0 + n * lam * (1.0 - alpha)
    objectives: list[float] = []
    if record_objective:
        objectives.append(enet_objective(X, y, beta, alpha, lam))
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        delta = 0.0
        for j in range(p):
            old = beta[j]
            rho = float(X[:, j] @ resid) + old  # sum x^2 = 1
            new = soft_threshold(rho, shrink) / denom
            if new != old:
                resid += X[:, j] * (old - new)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if record_objective:
            objectives.append(enet_objective(X, y, beta, alpha, lam))
        if delta < tol:
            converged = True
            break
    return CDResult(beta=beta, converged=converged, sweeps=sweeps, objectives=objectives)


def _destandardized_fit(b_std, y_mean, st: Standardization, **kw) -> LinearFit:
    coef = b_std / st.scale
    intercept = float(y_mean - (b_std * st.center / st.scale).sum())
    return LinearFit(
        intercept=intercept,
        coefficients=coef,
        feature_names=list(st.names),
        standardization=st,
        **kw,
    )


def fit_ols(X, y, feature_names=None) -> LinearFit:
    """Ordinary least squares with an intercept.

    Raises :class:`RankDeficiencyError` when the reciprocal condition
    number of the normal equations falls below 1e-12 (duplicated or
    constant columns, or n <= p).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    s = np.linalg.svd(Xc, compute_uv=False) if min(Xc.shape) else np.array([0.0])
    if s.size == 0 or s[0] == 0.0 or (s[-1] / s[0]) ** 2 < 1e-12:
        raise RankDeficiencyError(
            "normal equations are rank deficient (reciprocal condition < 1e-12)"
        )
    coef = np.linalg.solve(Xc.T @ Xc, Xc.T @ yc)
    intercept = float(y.mean() - X.mean(axis=0) @ coef)
    return LinearFit(
        intercept=intercept,
        coefficients=coef,
        feature_names=list(feature_names),
        converged=True,
    )


def fit_ridge(X, y, lam: float, feature_names=None) -> LinearFit:
    """Ridge regression via the closed form (X'X + lam I)^-1 X'y.

    Fitted on standardized columns and a centered response so the
    intercept is unpenalized; ``lam`` multiplies the unnormalized squared
    coefficient norm (see module docstring for the scale relation to
    :func:`fit_elastic_net`).
    """
    if lam <= 0:
        raise ValueError("lam must be > 0 for ridge")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    Xs, st = standardize_matrix(X, list(feature_names))
    b_std = ridge_closed_form(Xs, y - y.mean(), lam)
    return _destandardized_fit(
        b_std, y.mean(), st, penalty=PenaltySpec(alpha=0.0, lam=lam), converged=True
    )


def fit_elastic_net(
    X,
    y,
    penalty: PenaltySpec,
    tol: float = 1e-7,
    max_iter: int = 10_000,
    feature_names=None,
    cv_folds: int = 10,
    cv_seed: int = 0,
) -> LinearFit:
    """Elastic net fit by coordinate descent.

    Standardizes X internally (mean 0, sum of squares 1), centers y, runs
    cyclic coordinate descent from zero and destandardizes the solution.
    When ``penalty.lam`` is "lambda.min" the penalty size is chosen by
    :func:`lambda_path_cv` first. A fit that exhausts ``max_iter`` is
    returned with ``converged=False`` and a warning.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    lam = penalty.lam
    if lam == LAMBDA_MIN:
        lam = lambda_path_cv(X, y, penalty.alpha, k=cv_folds, seed=cv_seed).lambda_min
    Xs, st = standardize_matrix(X, list(feature_names))
    res = coordinate_descent(Xs, y - y.mean(), penalty.alpha, lam, tol=tol, max_iter=max_iter)
    if not res.converged:
        warnings.warn(
            f"coordinate descent did not converge in {max_iter} sweeps", RuntimeWarning
        )
    return _destandardized_fit(
        res.beta,
        y.mean(),
        st,
        penalty=PenaltySpec(alpha=penalty.alpha, lam=float(lam)),
        converged=res.converged,
        iterations=res.sweeps,
    )


@dataclass
class LambdaPath:
    lambda_min: float
    lambdas: np.ndarray
    cv_mean: np.ndarray
    cv_sd: np.ndarray


def lambda_max(X_std: np.ndarray, y_centered: np.ndarray, alpha: float) -> float:
    """Smallest penalty zeroing every coefficient on a standardized design."""
    n = y_centered.shape[0]
    alpha_eff = max(alpha, 1e-3)
    return float(np.abs(X_std.T @ y_centered).max() / (n * alpha_eff))


def lambda_path_cv(
    X,
    y,
    alpha: float,
    k: int = 10,
    seed: int = 0,
    n_lambdas: int = 100,
    lambda_ratio: float = 1e-4,
) -> LambdaPath:
    """Cross-validated penalty path: pick lambda.min by k-fold squared error.

    The grid runs 100 log-spaced steps from lambda_max (the smallest value
    zeroing all coefficients on the full data) down to lambda_max * 1e-4.
    Folds are contiguous blocks of a seeded shuffle; fits warm-start along
    the descending path. Ties prefer the larger (more shrunken) lambda.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if not 2 <= k <= n:
        raise ValueError("need n >= k >= 2 folds")
    keep = np.array([len(np.unique(X[:, j])) > 1 for j in range(X.shape[1])], dtype=bool)
    if not keep.any() or np.ptp(y) == 0.0:
        lam0 = 0.0
        grid = np.full(1, lam0)
        return LambdaPath(lam0, grid, np.zeros(1), np.zeros(1))
    Xs, _ = standardize_matrix(X[:, keep])
    lam_top = lambda_max(Xs, y - y.mean(), alpha)
    if lam_top == 0.0:
        return LambdaPath(0.0, np.zeros(1), np.zeros(1), np.zeros(1))
    grid = np.geomspace(lam_top, lam_top * lambda_ratio, n_lambdas)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, k)
    errors = np.zeros((k, grid.size))
    for fi, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(perm, test_idx, assume_unique=True)
        Xtr, ytr = X[train_idx], y[train_idx]
        sub = np.array(
            [len(np.unique(Xtr[:, j])) > 1 for j in range(Xtr.shape[1])], dtype=bool
        )
        Xtr_s, st = standardize_matrix(Xtr[:, sub])
        ytr_c = ytr - ytr.mean()
        Xte_s = st.apply(X[test_idx][:, sub])
        beta = None
        for li, lam in enumerate(grid):
            res = coordinate_descent(Xtr_s, ytr_c, alpha, lam, beta0=beta)
            beta = res.beta
            pred = ytr.mean() + Xte_s @ beta
            errors[fi, li] = float(((y[test_idx] - pred) ** 2).mean())
    cv_mean = errors.mean(axis=0)
    cv_sd = errors.std(axis=0, ddof=1) if k > 1 else np.zeros(grid.size)
    best = int(np.argmin(cv_mean))
    return LambdaPath(float(grid[best]), grid, cv_mean, cv_sd)
