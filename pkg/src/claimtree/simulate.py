"""Synthetic claims portfolio generator.

Draws correlated continuous features and integer-valued categorical
features, then builds a compound Poisson-gamma response: a Poisson claim
count with log-linked rate and gamma claim sizes with a log-linked rate
parameter, both driven by separate coefficient vectors. Optional white
noise perturbs positive totals.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Column, Dataset

CATEGORY_LEVELS = (-3.0, -2.0, 1.0, 4.0)
RATE_CAP = 1e12


def default_beta_poisson() -> np.ndarray:
    """Claim-count coefficients: intercept then strong/weak/null blocks."""
    return np.array(
        [-0.1] + [0.5] * 10 + [0.1] * 10 + [0.0] * 10 + [-0.5] * 10 + [0.1] * 10 + [0.0] * 10
    )


def default_beta_gamma() -> np.ndarray:
    """Claim-size coefficients: intercept then strong/weak/null blocks."""
    return np.array(
        [6.0] + [0.5] * 10 + [-0.1] * 10 + [0.0] * 10 + [0.5] * 10 + [-0.1] * 10 + [0.0] * 10
    )


@dataclass(frozen=True)
class SimConfig:
    """Portfolio generator settings.

    ``noise_sd`` of None applies the default of 5% of the standard
    deviation of the positive totals; 0 disables noise. Coefficient
    vectors carry the intercept first and must have length
    1 + p_continuous + p_categorical.
    """

    n: int = 10_000
    p_continuous: int = 30
    p_categorical: int = 30
    rho: float = 0.5
    beta_poisson: np.ndarray = field(default_factory=default_beta_poisson)
    beta_gamma: np.ndarray = field(default_factory=default_beta_gamma)
    power: float = 1.5
    phi: float = 2.0
    noise_sd: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta_poisson", np.asarray(self.beta_poisson, dtype=float))
        object.__setattr__(self, "beta_gamma", np.asarray(self.beta_gamma, dtype=float))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1.0 < self.power < 2.0:
            raise ValueError("power must lie strictly between 1 and 2")
        if self.phi <= 0:
            raise ValueError("phi must be > 0")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        want = 1 + self.p_continuous + self.p_categorical
        for label, beta in (("beta_poisson", self.beta_poisson), ("beta_gamma", self.beta_gamma)):
            if beta.shape != (want,):
                raise ValueError(f"{label} must have length {want} (intercept first)")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    @property
    def feature_names(self) -> list[str]:
        return [f"x{j + 1}" for j in range(self.p_continuous)] + [
            f"z{j + 1}" for j in range(self.p_categorical)
        ]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p_continuous": self.p_continuous,
            "p_categorical": self.p_categorical,
            "rho": self.rho,
            "beta_poisson": [float(v) for v in self.beta_poisson],
            "beta_gamma": [float(v) for v in self.beta_gamma],
            "power": self.power,
            "phi": self.phi,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "SimConfig":
        kwargs = dict(d)
        for key in ("beta_poisson", "beta_gamma"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = np.asarray(kwargs[key], dtype=float)
            else:
                kwargs.pop(key, None)
        return SimConfig(**kwargs)


@dataclass
class SimulatedPortfolio:
    dataset: Dataset
    lam: np.ndarray
    n_claims: np.ndarray
    gamma_shape: float
    gamma_rate: np.ndarray
    config: SimConfig


def _ar1_cholesky(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(cov)


def gen_features(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Feature matrix: correlated normals then iid integer categoricals.

    Continuous columns have covariance rho^|i-j| (sampled through the
    Cholesky factor); categorical columns are uniform on {-3, -2, 1, 4}.
    """
    chol = _ar1_cholesky(config.p_continuous, config.rho)
    cont = rng.standard_normal((config.n, config.p_continuous)) @ chol.T
    cat = rng.choice(np.array(CATEGORY_LEVELS), size=(config.n, config.p_categorical))
    return np.hstack([cont, cat])


def _linear_predictor(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return beta[0] + X @ beta[1:]


def lambda_of(x: np.ndarray, config: SimConfig):
    """Poisson claim rate: exp(x beta)^(2-power) / (phi (2-power)).

    Accepts one feature row (returns a float) or a matrix (returns a
    vector). Rates are capped at 1e12 with a warning.
    """
    single = np.asarray(x).ndim == 1
    eta = _linear_predictor(x, config.beta_poisson)
    with np.errstate(over="ignore"):
        lam = np.exp(eta) ** (2.0 - config.power) / (config.phi * (2.0 - config.power))
    if np.any(lam > RATE_CAP) or not np.all(np.isfinite(lam)):
        warnings.warn("claim rate overflow, capping at 1e12", RuntimeWarning)
        lam = np.minimum(np.nan_to_num(lam, posinf=RATE_CAP), RATE_CAP)
    return float(lam[0]) if single else lam


def gamma_params_of(x: np.ndarray, config: SimConfig):
    """Gamma severity parameters (shape, per-row rate).

    Shape is (2-power)/(power-1); the rate is
    exp(x beta)^(1-power) / (phi (power-1)), so larger linear predictors
    mean larger claims.
    """
    single = np.asarray(x).ndim == 1
    shape = (2.0 - config.power) / (config.power - 1.0)
    eta = _linear_predictor(x, config.beta_gamma)
    with np.errstate(over="ignore"):
        rate = np.exp(eta) ** (1.0 - config.power) / (config.phi * (config.power - 1.0))
    if np.any(rate > RATE_CAP) or not np.all(np.isfinite(rate)):
        warnings.warn("severity rate overflow, capping at 1e12", RuntimeWarning)
        rate = np.minimum(np.nan_to_num(rate, posinf=RATE_CAP), RATE_CAP)
    return (shape, float(rate[0])) if single else (shape, rate)


def simulate(config: SimConfig) -> SimulatedPortfolio:
    """Generate one portfolio: features, latent rates and the claim total.

    Per row, the claim count is Poisson with the log-linked rate and the
    total is the sum of that many gamma severities (drawn as a single
    gamma with count-scaled shape). Positive totals get white noise of
    scale ``noise_sd`` and are floored at 0; rows floored to 0 count as
    zero claims downstream.
    """
    rng = np.random.default_rng(config.seed)
    X = gen_features(config, rng)
    lam = lambda_of(X, config)
    shape, rate = gamma_params_of(X, config)
    counts = rng.poisson(lam)
    total = np.zeros(config.n)
    pos = counts > 0
    if pos.any():
        total[pos] = rng.gamma(shape * counts[pos], 1.0 / rate[pos])
    noise_sd = config.noise_sd
    if noise_sd is None:
        noise_sd = 0.05 * (total[pos].std() if pos.sum() > 1 else 0.0)
    if noise_sd > 0 and pos.any():
        total[pos] = np.maximum(total[pos] + rng.normal(0.0, noise_sd, int(pos.sum())), 0.0)

    columns = tuple(
        [Column(name, "continuous") for name in config.feature_names]
        + [Column("claim", "response")]
    )
    ds = Dataset(columns, np.column_stack([X, total]))
    return SimulatedPortfolio(
        dataset=ds,
        lam=lam,
        n_claims=counts,
        gamma_shape=shape,
        gamma_rate=rate,
        config=config,
    )


def save_latents_csv(portfolio: SimulatedPortfolio, path) -> None:
    """Sidecar diagnostics: per-row rate, count and severity parameters."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row,lambda,n_claims,gamma_shape,gamma_rate\n")
        for i in range(portfolio.config.n):
            fh.write(
                f"{i},{float(portfolio.lam[i])!r},{int(portfolio.n_claims[i])},"
                f"{float(portfolio.gamma_shape)!r},{float(portfolio.gamma_rate[i])!r}\n"
            )


def load_config(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return SimConfig.from_dict(json.load(fh))
