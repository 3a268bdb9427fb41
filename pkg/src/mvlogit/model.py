"""Rank-1 bilinear logistic model: parameter layout and evaluation.

The model couples a p x q covariate matrix x to a binary response through

    logit P(Y=1 | x) = gamma + alpha' x beta,

with the row-effect vector alpha pinned to 1 at one entry (the "baseline
row") so that (alpha, beta) is identified; (alpha/c, c*beta) would
otherwise describe the same model for any c != 0.  The free parameters
are theta = (gamma, alpha-without-baseline, beta), p+q in total.

Everything here is a pure function over immutable value types; arrays
are stored read-only so instances can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ValidationError

__all__ = [
    "MatrixDataset",
    "ThetaParam",
    "StandardizationStats",
    "linear_predictor",
    "success_probability",
    "odds_ratio",
    "select_baseline_row",
    "standardize",
    "vectorized_coefficient",
    "classify",
    "repin_baseline",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MatrixDataset:
    """n labelled samples, each a p x q real matrix with a 0/1 label.

    ``matrices`` has shape (n, p, q); ``labels`` has shape (n,).  All
    entries must be finite and every matrix must share the same (p, q).
    """

    matrices: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] < 1:
            raise ValidationError(f"matrices must be (n, p, q) with n >= 1, got shape {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise ValidationError("matrices contain non-finite entries")
        labels = np.asarray(self.labels)
        if labels.shape != (mats.shape[0],):
            raise ValidationError(f"labels shape {labels.shape} does not match n={mats.shape[0]}")
        if not np.isin(labels, (0, 1)).all():
            raise ValidationError("labels must be 0 or 1")
        object.__setattr__(self, "matrices", _readonly(mats))
        labels = labels.astype(int)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.matrices.shape[0]

    @property
    def p(self) -> int:
        return self.matrices.shape[1]

    @property
    def q(self) -> int:
        return self.matrices.shape[2]


@dataclass(frozen=True)
class ThetaParam:
    """Constrained parameter bundle (gamma, alpha, beta, baseline row).

    ``alpha[baseline_row]`` is exactly 1.0; the free parameters are
    gamma, the p-1 remaining alpha entries, and beta.  ``baseline_row``
    is a 0-based row index.
    """

    gamma: float
    alpha: np.ndarray
    beta: np.ndarray
    baseline_row: int = 0

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if alpha.ndim != 1 or beta.ndim != 1:
            raise ValidationError("alpha and beta must be 1-d vectors")
        if not 0 <= self.baseline_row < alpha.size:
            raise ValidationError(f"baseline_row {self.baseline_row} out of range for p={alpha.size}")
        if alpha[self.baseline_row] != 1.0:
            raise ValidationError("alpha[baseline_row] must equal 1 exactly")
        if not (np.isfinite(alpha).all() and np.isfinite(beta).all() and np.isfinite(self.gamma)):
            raise ValidationError("parameters must be finite")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alpha", _readonly(alpha))
        object.__setattr__(self, "beta", _readonly(beta))

    @property
    def p(self) -> int:
        return self.alpha.size

    @property
    def q(self) -> int:
        return self.beta.size

    def free(self) -> np.ndarray:
        """Free-parameter vector (gamma, alpha minus baseline, beta), length p+q."""
        mask = np.arange(self.p) != self.baseline_row
        return np.concatenate(([self.gamma], self.alpha[mask], self.beta))

    @classmethod
    def from_free(cls, free: np.ndarray, p: int, q: int, baseline_row: int) -> "ThetaParam":
        free = np.asarray(free, dtype=float)
        if free.shape != (p + q,):
            raise ValidationError(f"free vector must have length p+q={p + q}, got {free.shape}")
        alpha = np.empty(p)
        alpha[baseline_row] = 1.0
        alpha[np.arange(p) != baseline_row] = free[1:p]
        return cls(gamma=float(free[0]), alpha=alpha, beta=free[p:], baseline_row=baseline_row)


@dataclass(frozen=True)
class StandardizationStats:
    """Per-entry sample means and SDs used to standardize a dataset.

    ``constant`` flags entries whose sample variance was zero; those are
    centered but never divided by their (zero) SD.
    """

    means: np.ndarray
    sds: np.ndarray
    constant: np.ndarray = field(default=None)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        sds = np.asarray(self.sds, dtype=float)
        if means.shape != sds.shape or means.ndim != 2:
            raise ValidationError("means and sds must be matching p x q matrices")
        constant = self.constant
        if constant is None:
            constant = np.zeros(means.shape, dtype=bool)
        constant = np.asarray(constant, dtype=bool)
        if constant.shape != means.shape:
            raise ValidationError("constant mask shape must match means")
        if np.any(sds[~constant] <= 0):
            raise ValidationError("sds must be positive on non-constant entries")
        object.__setattr__(self, "means", _readonly(means))
        object.__setattr__(self, "sds", _readonly(sds))
        constant = constant.copy()
        constant.setflags(write=False)
        object.__setattr__(self, "constant", constant)

    def apply(self, matrices: np.ndarray) -> np.ndarray:
        """Standardize (n, p, q) matrices with the stored statistics."""
        matrices = np.asarray(matrices, dtype=float)
        if matrices.shape[-2:] != self.means.shape:
            raise ValidationError(
                f"matrices of shape {matrices.shape} do not match stats {self.means.shape}")
        scale = np.where(self.constant, 1.0, self.sds)
        return (matrices - self.means) / scale


def _check_dims(theta: ThetaParam, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (theta.p, theta.q):
        raise ValidationError(f"covariate shape {x.shape} does not match theta ({theta.p}, {theta.q})")
    return x


def linear_predictor(theta: ThetaParam, x: np.ndarray) -> float:
    """gamma + alpha' x beta for one covariate matrix."""
    x = _check_dims(theta, x)
    return float(theta.gamma + theta.alpha @ x @ theta.beta)


def success_probability(theta: ThetaParam, x: np.ndarray) -> float:
    """P(Y=1 | x) through a numerically stable sigmoid.

    Saturates smoothly for extreme predictors (no overflow for
    |predictor| at least up to 700; beyond the subnormal range the
    result underflows to exactly 0.0 or rounds to 1.0).
    """
    return float(expit(linear_predictor(theta, x)))


def odds_ratio(theta: ThetaParam, i: int, j: int) -> float:
    """Multiplicative odds change for a unit bump of entry (i, j): exp(alpha_i * beta_j)."""
    if not 0 <= i < theta.p:
        raise ValidationError(f"row index {i} out of range for p={theta.p}")
    if not 0 <= j < theta.q:
        raise ValidationError(f"column index {j} out of range for q={theta.q}")
    return float(np.exp(theta.alpha[i] * theta.beta[j]))


def select_baseline_row(data: MatrixDataset) -> int:
    """Pick the row to pin: argmax_k sum_j |corr(X[k,j], Y)|.

    The chosen row is the one most correlated with the response, which
    keeps the pinned entry away from zero.  Entries with zero variance
    contribute nothing; ties go to the smallest index.
    """
    if data.n < 2:
        raise ValidationError("need at least 2 samples to compute correlations")
    y = data.labels.astype(float)
    y_c = y - y.mean()
    y_ss = float(y_c @ y_c)
    if y_ss == 0.0:
        raise ValidationError("labels are all identical; correlation with Y is undefined")
    x_c = data.matrices - data.matrices.mean(axis=0)
    cov = np.einsum("npq,n->pq", x_c, y_c)
    x_ss = np.einsum("npq,npq->pq", x_c, x_c)
    denom = np.sqrt(x_ss * y_ss)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, cov / denom, 0.0)
    score = np.abs(corr).sum(axis=1)
    return int(np.argmax(score))  # argmax returns the first (smallest) index on ties


def standardize(data: MatrixDataset) -> tuple[MatrixDataset, StandardizationStats]:
    """Center each entry position to mean 0 and scale to sample SD 1.

    Uses the n-1 denominator.  Zero-variance entries are centered only
    and flagged in the returned stats.
    """
    if data.n < 2:
        raise ValidationError("need at least 2 samples to standardize")
    means = data.matrices.mean(axis=0)
    sds = data.matrices.std(axis=0, ddof=1)
    constant = sds == 0.0
    stats = StandardizationStats(means=means, sds=np.where(constant, 1.0, sds), constant=constant)
    return MatrixDataset(stats.apply(data.matrices), data.labels), stats


def vectorized_coefficient(theta: ThetaParam) -> tuple[float, np.ndarray]:
    """(gamma, vec(alpha beta')) with column-major stacking.

    The returned pq-vector reproduces the bilinear form as an inner
    product: alpha' x beta == <vec(alpha beta'), vec(x)> with vec
    stacking columns.
    """
    return theta.gamma, np.outer(theta.alpha, theta.beta).ravel(order="F")


def classify(theta: ThetaParam, x: np.ndarray, threshold: float = 0.5) -> int:
    """1 iff the success probability strictly exceeds ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError("threshold must lie in (0, 1)")
    return int(success_probability(theta, x) > threshold)


def repin_baseline(theta: ThetaParam, new_row: int) -> ThetaParam:
    """Re-express theta with a different baseline row pinned to 1.

    Rescales (alpha, beta) by the old value at ``new_row``; the model is
    unchanged because (alpha/c, c*beta) gives identical predictors.
    """
    if not 0 <= new_row < theta.p:
        raise ValidationError(f"row index {new_row} out of range for p={theta.p}")
    c = theta.alpha[new_row]
    if c == 0.0:
        raise ValidationError("cannot pin a zero alpha entry to 1")
    alpha = theta.alpha / c
    alpha[new_row] = 1.0  # exact, not up to rounding
    return ThetaParam(gamma=theta.gamma, alpha=alpha, beta=theta.beta * c, baseline_row=new_row)
