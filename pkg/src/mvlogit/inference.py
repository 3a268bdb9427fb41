"""Asymptotic covariance and confidence intervals for fitted models.

The covariance of sqrt(n)(theta_hat - theta) is estimated by the
sandwich

    Sigma_hat = (H_lam/n)^{-1} (X'VX/n) (H_lam/n)^{-1},

which collapses to the inverse empirical information when lam = 0.
Coordinate intervals are theta_i -/+ z * sqrt(Sigma_ii) / sqrt(n);
probability intervals are built on the logit scale and mapped through
the logistic function, so they always land inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit
from scipy.stats import norm

from .errors import NumericalError, ValidationError
from .model import MatrixDataset, ThetaParam, linear_predictor
from .solver import FitConfig, FitResult, fisher_hessian, working_covariates, _predictors

__all__ = [
    "CovarianceEstimate",
    "IntervalEstimate",
    "covariance_estimate",
    "theta_ci",
    "probability_ci",
]


@dataclass(frozen=True)
class CovarianceEstimate:
    """Sandwich estimate of the asymptotic covariance of sqrt(n) theta_hat."""

    sigma_hat: np.ndarray
    n: int

    def __post_init__(self):
        s = np.asarray(self.sigma_hat, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValidationError("sigma_hat must be square")
        if not np.allclose(s, s.T, atol=1e-10):
            raise ValidationError("sigma_hat must be symmetric")
        if np.any(np.diag(s) < -1e-12):
            raise ValidationError("sigma_hat has a negative diagonal entry")
        object.__setattr__(self, "sigma_hat", s)

    def standard_errors(self) -> np.ndarray:
        """Per-coordinate SEs of theta_hat: sqrt(diag(Sigma)/n)."""
        return np.sqrt(np.maximum(np.diag(self.sigma_hat), 0.0) / self.n)


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValidationError("level must lie in (0, 1)")
        if self.lower > self.upper:
            raise ValidationError("interval lower bound exceeds upper bound")


def _spd_inverse(m: np.ndarray) -> np.ndarray:
    """Cholesky inverse with the solver's escalating-ridge fallback."""
    if not np.all(np.isfinite(m)):
        raise NumericalError("non-finite matrix in covariance estimation")
    dim = m.shape[0]
    eye = np.eye(dim)
    try:
        return cho_solve(cho_factor(m, lower=True), eye)
    except LinAlgError:
        pass
    tr = float(np.trace(m))
    scale = tr / dim if tr > 0 else 1.0
    for k in range(60):
        try:
            return cho_solve(cho_factor(m + 1e-8 * (2.0 ** k) * scale * eye, lower=True), eye)
        except LinAlgError:
            continue
    raise NumericalError("covariance factor is singular beyond the ridge fallback")


def covariance_estimate(fit: FitResult, data: MatrixDataset, config: FitConfig) -> CovarianceEstimate:
    """Sandwich covariance at the fitted parameters.

    ``config`` must carry the lam/penalty_kind the fit used; with lam=0
    the bread equals the meat and the sandwich reduces to the inverse
    empirical information.
    """
    theta = fit.theta
    xw = working_covariates(theta, data)
    pi = expit(_predictors(theta, data))
    v = pi * (1.0 - pi)
    n = data.n
    meat = xw.T @ (v[:, None] * xw) / n
    bread_inv = _spd_inverse(fisher_hessian(theta, data, config) / n)
    sigma = bread_inv @ meat @ bread_inv
    return CovarianceEstimate(sigma_hat=0.5 * (sigma + sigma.T), n=n)


def theta_ci(fit: FitResult, cov: CovarianceEstimate, index: int, level: float = 0.95) -> IntervalEstimate:
    """Wald interval for one free coordinate of (gamma, alpha*, beta)."""
    free = fit.theta.free()
    if not 0 <= index < free.size:
        raise ValidationError(f"coordinate index {index} out of range for {free.size} free parameters")
    z = norm.ppf(0.5 + level / 2.0)
    half = z * float(cov.standard_errors()[index])
    return IntervalEstimate(lower=float(free[index] - half), upper=float(free[index] + half), level=level)


def probability_ci(fit: FitResult, cov: CovarianceEstimate, x: np.ndarray, level: float = 0.95) -> IntervalEstimate:
    """Delta-method interval for P(Y=1 | x), built on the logit scale.

    The working covariate of x at theta_hat propagates the parameter
    covariance to the predictor; mapping the symmetric logit interval
    through the logistic function keeps both endpoints inside [0, 1].
    """
    theta = fit.theta
    x = np.asarray(x, dtype=float)
    if x.shape != (theta.p, theta.q):
        raise ValidationError(f"covariate shape {x.shape} does not match theta ({theta.p}, {theta.q})")
    p = theta.p
    xvec = np.empty(p + theta.q)
    xvec[0] = 1.0
    xvec[1:p] = (x @ theta.beta)[np.arange(p) != theta.baseline_row]
    xvec[p:] = x.T @ theta.alpha
    var = float(xvec @ cov.sigma_hat @ xvec)
    sd = np.sqrt(max(var, 0.0))
    eta = linear_predictor(theta, x)
    z = norm.ppf(0.5 + level / 2.0)
    half = z * sd / np.sqrt(cov.n)
    return IntervalEstimate(lower=float(expit(eta - half)), upper=float(expit(eta + half)), level=level)
