"""Baseline-category extension of the bilinear logistic model to H classes.

Each non-reference class h carries its own (gamma_h, alpha_h, beta_h)
block with alpha_h pinned at a baseline row shared across blocks:

    log{P(Y=h|X) / P(Y=H|X)} = gamma_h + alpha_h' X beta_h.

The stacked free parameter has (H-1)(p+q) coordinates.  Fitting reuses
the binary solver's damped Fisher-scoring driver with the block-diagonal
working covariates X* = diag{X(theta_1), ..., X(theta_{H-1})} and the
multinomial weight blocks V_hh = diag(pi_h (1-pi_h)),
V_hk = diag(-pi_h pi_k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .model import MatrixDataset, ThetaParam, select_baseline_row, _readonly
from .solver import (
    FitConfig,
    _newton_ascent,
    _penalty_mask,
    working_covariates,
)

__all__ = [
    "MultiClassDataset",
    "ThetaMulti",
    "MultiFitResult",
    "class_probabilities",
    "multiclass_log_likelihood",
    "multiclass_fit",
    "multiclass_covariance",
]


@dataclass(frozen=True)
class MultiClassDataset:
    """Like MatrixDataset but with labels in {1, ..., num_classes}."""

    matrices: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] < 1:
            raise ValidationError(f"matrices must be (n, p, q) with n >= 1, got {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise ValidationError("matrices contain non-finite entries")
        labels = np.asarray(self.labels)
        if labels.shape != (mats.shape[0],):
            raise ValidationError("labels shape does not match n")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be at least 2")
        if not np.isin(labels, np.arange(1, self.num_classes + 1)).all():
            raise ValidationError(f"labels must lie in 1..{self.num_classes}")
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
class ThetaMulti:
    """Per-class parameter blocks sharing one baseline row.

    ``blocks[j]`` belongs to class ``block_classes[j]``; the remaining
    class is the reference whose predictor is identically zero.
    """

    blocks: tuple[ThetaParam, ...]
    block_classes: tuple[int, ...]
    reference_class: int

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise ValidationError("need at least one non-reference block")
        if len(self.blocks) != len(self.block_classes):
            raise ValidationError("blocks and block_classes lengths differ")
        base = self.blocks[0]
        for blk in self.blocks:
            if blk.baseline_row != base.baseline_row or (blk.p, blk.q) != (base.p, base.q):
                raise ValidationError("all blocks must share dimensions and baseline_row")
        classes = set(self.block_classes) | {self.reference_class}
        if len(classes) != len(self.blocks) + 1:
            raise ValidationError("block classes and reference class must be distinct")

    @property
    def baseline_row(self) -> int:
        return self.blocks[0].baseline_row

    @property
    def num_classes(self) -> int:
        return len(self.blocks) + 1

    def class_order(self) -> list[int]:
        return sorted(list(self.block_classes) + [self.reference_class])

    def free(self) -> np.ndarray:
        return np.concatenate([blk.free() for blk in self.blocks])


@dataclass(frozen=True)
class MultiFitResult:
    theta: ThetaMulti
    converged: bool
    iterations: int
    final_gradient_norm: float
    loglik: float
    penalized_loglik: float
    trace: tuple[float, ...]
    hessian_ridge: float = 0.0


def _block_predictors(theta: ThetaMulti, matrices: np.ndarray) -> np.ndarray:
    """(n, H-1) predictors gamma_h + alpha_h' X_i beta_h."""
    cols = [blk.gamma + np.einsum("npq,p,q->n", matrices, blk.alpha, blk.beta)
            for blk in theta.blocks]
    return np.column_stack(cols)


def _block_probs(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-block and reference probabilities from (n, H-1) predictors, max-shifted."""
    aug = np.concatenate([eta, np.zeros((eta.shape[0], 1))], axis=1)
    aug -= aug.max(axis=1, keepdims=True)
    ex = np.exp(aug)
    denom = ex.sum(axis=1, keepdims=True)
    probs = ex / denom
    return probs[:, :-1], probs[:, -1]


def class_probabilities(theta: ThetaMulti, x: np.ndarray) -> np.ndarray:
    """Probability of each class for one covariate matrix.

    Returned in ascending class-label order; components are positive and
    sum to 1.
    """
    x = np.asarray(x, dtype=float)
    base = theta.blocks[0]
    if x.shape != (base.p, base.q):
        raise ValidationError(f"covariate shape {x.shape} does not match theta ({base.p}, {base.q})")
    eta = _block_predictors(theta, x[None, :, :])
    pi_blocks, pi_ref = _block_probs(eta)
    by_class = {cls: float(pi_blocks[0, j]) for j, cls in enumerate(theta.block_classes)}
    by_class[theta.reference_class] = float(pi_ref[0])
    return np.array([by_class[c] for c in theta.class_order()])


def _indicators(theta: ThetaMulti, data: MultiClassDataset) -> np.ndarray:
    """(n, H-1) one-hot indicators for the non-reference classes."""
    return np.column_stack([(data.labels == cls).astype(float) for cls in theta.block_classes])


def multiclass_log_likelihood(theta: ThetaMulti, data: MultiClassDataset) -> float:
    """sum_i [sum_h Y_hi eta_hi - log(1 + sum_h exp(eta_hi))]."""
    base = theta.blocks[0]
    if (base.p, base.q) != (data.p, data.q):
        raise ValidationError("theta dimensions do not match data")
    if theta.num_classes != data.num_classes:
        raise ValidationError("theta and data disagree on the number of classes")
    eta = _block_predictors(theta, data.matrices)
    ind = _indicators(theta, data)
    aug = np.concatenate([eta, np.zeros((data.n, 1))], axis=1)
    return float((ind * eta).sum() - logsumexp(aug, axis=1).sum())


def _binary_view(data: MultiClassDataset, cls: int) -> MatrixDataset:
    return MatrixDataset(data.matrices, (data.labels == cls).astype(int))


def _stack_meat(theta: ThetaMulti, data: MultiClassDataset) -> np.ndarray:
    """X*' V* X* assembled block by block."""
    blocks = theta.blocks
    h1 = len(blocks)
    dim = data.p + data.q
    xw = [working_covariates(blk, _binary_view(data, cls))
          for blk, cls in zip(blocks, theta.block_classes)]
    pi, _ = _block_probs(_block_predictors(theta, data.matrices))
    out = np.zeros((h1 * dim, h1 * dim))
    for a in range(h1):
        for b in range(a, h1):
            v = pi[:, a] * (1.0 - pi[:, a]) if a == b else -pi[:, a] * pi[:, b]
            blockmat = xw[a].T @ (v[:, None] * xw[b])
            out[a * dim:(a + 1) * dim, b * dim:(b + 1) * dim] = blockmat
            if b != a:
                out[b * dim:(b + 1) * dim, a * dim:(a + 1) * dim] = blockmat.T
    return 0.5 * (out + out.T)


def _unpack_multi(free, p, q, baseline_row, block_classes, reference_class) -> ThetaMulti:
    dim = p + q
    blocks = tuple(
        ThetaParam.from_free(free[j * dim:(j + 1) * dim], p, q, baseline_row)
        for j in range(len(block_classes)))
    return ThetaMulti(blocks=blocks, block_classes=block_classes, reference_class=reference_class)


def multiclass_fit(
    data: MultiClassDataset,
    config: FitConfig = FitConfig(),
    reference_class: int | None = None,
    init: ThetaMulti | None = None,
) -> MultiFitResult:
    """Fit all (H-1) blocks jointly by damped Fisher scoring.

    The reference class defaults to the largest label.  The shared
    baseline row comes from ``config.baseline_row`` or the correlation
    rule applied to a one-vs-rest binarization of the first block class.
    """
    h = data.num_classes
    ref = h if reference_class is None else reference_class
    if not 1 <= ref <= h:
        raise ValidationError(f"reference_class {ref} out of range 1..{h}")
    block_classes = tuple(c for c in range(1, h + 1) if c != ref)
    p, q = data.p, data.q
    dim = p + q

    if config.baseline_row is not None:
        baseline = config.baseline_row
        if not 0 <= baseline < p:
            raise ValidationError(f"baseline_row {baseline} out of range for p={p}")
    else:
        baseline = select_baseline_row(_binary_view(data, block_classes[0]))

    mask = np.tile(_penalty_mask(dim, config.penalty_kind), h - 1)

    def unpack(free: np.ndarray) -> ThetaMulti:
        return _unpack_multi(free, p, q, baseline, block_classes, ref)

    def value(free: np.ndarray) -> float:
        theta = unpack(free)
        return multiclass_log_likelihood(theta, data) - config.lam * 0.5 * float((mask * free) @ free)

    def grad(free: np.ndarray) -> np.ndarray:
        theta = unpack(free)
        pi, _ = _block_probs(_block_predictors(theta, data.matrices))
        resid = _indicators(theta, data) - pi
        parts = [working_covariates(blk, _binary_view(data, cls)).T @ resid[:, j]
                 for j, (blk, cls) in enumerate(zip(theta.blocks, theta.block_classes))]
        return np.concatenate(parts) - config.lam * mask * free

    def hess(free: np.ndarray) -> np.ndarray:
        theta = unpack(free)
        h_mat = _stack_meat(theta, data)
        h_mat[np.diag_indices_from(h_mat)] += config.lam * mask
        return h_mat

    free0 = np.zeros((h - 1) * dim) if init is None else init.free()
    free, v, converged, trace, ridge = _newton_ascent(
        free0, value, grad, hess, lam=config.lam, tol=config.tol, max_iter=config.max_iter)
    theta = unpack(free)
    return MultiFitResult(
        theta=theta,
        converged=converged,
        iterations=len(trace),
        final_gradient_norm=float(np.max(np.abs(grad(free)))),
        loglik=multiclass_log_likelihood(theta, data),
        penalized_loglik=v,
        trace=tuple(trace),
        hessian_ridge=ridge,
    )


def multiclass_covariance(fit: MultiFitResult, data: MultiClassDataset, config: FitConfig):
    """Block sandwich (H*/n)^{-1} (X*'V*X*/n) (H*/n)^{-1} at the fit."""
    from .inference import CovarianceEstimate, _spd_inverse

    theta = fit.theta
    n = data.n
    meat = _stack_meat(theta, data) / n
    bread = meat.copy()
    mask = np.tile(_penalty_mask(data.p + data.q, config.penalty_kind), len(theta.blocks))
    bread[np.diag_indices_from(bread)] += config.lam * mask / n
    bread_inv = _spd_inverse(bread)
    sigma = bread_inv @ meat @ bread_inv
    return CovarianceEstimate(sigma_hat=0.5 * (sigma + sigma.T), n=n)
