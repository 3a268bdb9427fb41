"""Penalized maximum-likelihood fitting of the bilinear logistic model.

The fit alternates Fisher-scoring steps

    theta <- theta + H_lambda(theta)^{-1} grad_lambda(theta),

where H_lambda = X(theta)' V X(theta) + lambda J'' uses the working
covariates X_i(theta) = (1, beta' X_i' C, alpha' X_i)' and V is the
diagonal of Bernoulli variances.  H_lambda is the expected negative
Hessian (the exact one has an extra zero-mean cross block, exposed here
as :func:`hessian_cross_block` for verification), so the plus sign above
is an ascent direction.  Step-halving keeps the penalized log-likelihood
monotone; an escalating ridge rescues indefinite factorizations.

The conventional ridge-logistic model on vec(X) (1 + pq parameters) is
fitted with the same Newton machinery and serves as the comparison arm.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .errors import NumericalError, ValidationError
from .model import MatrixDataset, ThetaParam, select_baseline_row

__all__ = [
    "PENALTY_KINDS",
    "FitConfig",
    "FitResult",
    "ConventionalFitResult",
    "log_likelihood",
    "penalty",
    "working_covariates",
    "gradient",
    "fisher_hessian",
    "hessian_cross_block",
    "fit",
    "conventional_log_likelihood",
    "fit_conventional",
    "select_lambda_cv",
]

PENALTY_KINDS = ("all-theta", "no-intercept")

MAX_STEP_HALVINGS = 30
SEPARATION_LIMIT = 1e4  # sup-norm of theta beyond which the unpenalized MLE is declared nonexistent
_RIDGE_TRIES = 60


@dataclass(frozen=True)
class FitConfig:
    """Solver settings.

    lam: nonnegative ridge weight; penalty_kind: "all-theta" penalizes
    (gamma, alpha*, beta), "no-intercept" leaves gamma out.  The pinned
    alpha entry is never penalized (it is not a free parameter).
    baseline_row=None defers to the correlation rule on the data.
    """

    lam: float = 0.0
    penalty_kind: str = "no-intercept"
    tol: float = 1e-8
    max_iter: int = 100
    init: ThetaParam | None = None
    baseline_row: int | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("lam must be nonnegative")
        if self.penalty_kind not in PENALTY_KINDS:
            raise ValidationError(f"penalty_kind must be one of {PENALTY_KINDS}")
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")


@dataclass(frozen=True)
class FitResult:
    theta: ThetaParam
    converged: bool
    iterations: int
    final_gradient_norm: float
    loglik: float
    penalized_loglik: float
    trace: tuple[float, ...]
    hessian_ridge: float = 0.0  # largest ridge the factorization fallback needed


@dataclass(frozen=True)
class ConventionalFitResult:
    """Ridge-logistic fit on vec(X): intercept plus a pq coefficient vector."""

    gamma: float
    xi: np.ndarray  # column-major vec of the p x q coefficient matrix
    converged: bool
    iterations: int
    final_gradient_norm: float
    loglik: float
    penalized_loglik: float
    trace: tuple[float, ...]
    hessian_ridge: float = 0.0

    def xi_matrix(self, p: int, q: int) -> np.ndarray:
        return self.xi.reshape((p, q), order="F")


def _penalty_mask(dim: int, penalty_kind: str) -> np.ndarray:
    if penalty_kind not in PENALTY_KINDS:
        raise ValidationError(f"penalty_kind must be one of {PENALTY_KINDS}")
    mask = np.ones(dim)
    if penalty_kind == "no-intercept":
        mask[0] = 0.0
    return mask


def _check_data(theta: ThetaParam, data: MatrixDataset) -> None:
    if (theta.p, theta.q) != (data.p, data.q):
        raise ValidationError(
            f"theta dimensions ({theta.p}, {theta.q}) do not match data ({data.p}, {data.q})")


def _predictors(theta: ThetaParam, data: MatrixDataset) -> np.ndarray:
    return theta.gamma + np.einsum("npq,p,q->n", data.matrices, theta.alpha, theta.beta)


def log_likelihood(theta: ThetaParam, data: MatrixDataset) -> float:
    """sum_i [y_i eta_i - log(1 + exp(eta_i))], stable for extreme eta."""
    _check_data(theta, data)
    eta = _predictors(theta, data)
    return float(data.labels @ eta - np.logaddexp(0.0, eta).sum())


def penalty(theta: ThetaParam, penalty_kind: str, lam: float) -> float:
    """lam * J(theta) with a quadratic J over the penalized free coordinates."""
    if lam < 0:
        raise ValidationError("lam must be nonnegative")
    free = theta.free()
    mask = _penalty_mask(free.size, penalty_kind)
    return float(lam * 0.5 * (mask * free) @ free)


def working_covariates(theta: ThetaParam, data: MatrixDataset) -> np.ndarray:
    """n x (p+q) matrix with rows (1, (X_i beta) off baseline, X_i' alpha)."""
    _check_data(theta, data)
    n, p, q = data.n, data.p, data.q
    xb = data.matrices @ theta.beta               # (n, p) = X_i beta
    xa = np.einsum("npq,p->nq", data.matrices, theta.alpha)  # (n, q) = X_i' alpha
    out = np.empty((n, p + q))
    out[:, 0] = 1.0
    out[:, 1:p] = xb[:, np.arange(p) != theta.baseline_row]
    out[:, p:] = xa
    return out


def gradient(theta: ThetaParam, data: MatrixDataset, config: FitConfig) -> np.ndarray:
    """Analytic gradient of the penalized log-likelihood wrt (gamma, alpha*, beta)."""
    xw = working_covariates(theta, data)
    resid = data.labels - expit(_predictors(theta, data))
    free = theta.free()
    mask = _penalty_mask(free.size, config.penalty_kind)
    return xw.T @ resid - config.lam * mask * free


def fisher_hessian(theta: ThetaParam, data: MatrixDataset, config: FitConfig) -> np.ndarray:
    """X(theta)' V X(theta) + lam J'': symmetric PSD curvature proxy."""
    xw = working_covariates(theta, data)
    pi = expit(_predictors(theta, data))
    v = pi * (1.0 - pi)
    h = xw.T @ (v[:, None] * xw)
    h[np.diag_indices_from(h)] += config.lam * _penalty_mask(h.shape[0], config.penalty_kind)
    return 0.5 * (h + h.T)


def hessian_cross_block(theta: ThetaParam, data: MatrixDataset) -> np.ndarray:
    """Zero-mean block dropped by Fisher scoring.

    The exact Hessian of the penalized log-likelihood is
    -H_lambda + B where B holds sum_i C' X_i (y_i - pi_i) in the
    (alpha*, beta) off-diagonal blocks and zeros elsewhere.
    """
    _check_data(theta, data)
    p, q = data.p, data.q
    resid = data.labels - expit(_predictors(theta, data))
    block = np.einsum("npq,n->pq", data.matrices, resid)
    block = block[np.arange(p) != theta.baseline_row]  # C' (sum_i X_i r_i), (p-1) x q
    out = np.zeros((p + q, p + q))
    out[1:p, p:] = block
    out[p:, 1:p] = block.T
    return out


def _solve_step(h: np.ndarray, g: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """SPD solve with an escalating ridge fallback; returns (step, ridge used)."""
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
        raise NumericalError("non-finite gradient or Hessian")
    dim = h.shape[0]
    try:
        return cho_solve(cho_factor(h, lower=True), g), 0.0
    except LinAlgError:
        pass
    tr = float(np.trace(h))
    scale = tr / dim if tr > 0 else 1.0
    eye = np.eye(dim)
    for k in range(_RIDGE_TRIES):
        ridge = 1e-8 * (2.0 ** k) * scale
        try:
            return cho_solve(cho_factor(h + ridge * eye, lower=True), g), ridge
        except LinAlgError:
            continue
    raise NumericalError(
        "Hessian is singular beyond the ridge fallback"
        + (" (lam=0: the model matrix is rank deficient)" if lam == 0.0 else ""))


def _newton_ascent(free0, value, grad, hess, *, lam, tol, max_iter):
    """Shared damped-Newton driver; returns (free, converged, trace, max_ridge)."""
    free = np.asarray(free0, dtype=float).copy()
    v = value(free)
    if not np.isfinite(v):
        raise NumericalError("penalized log-likelihood is non-finite at the initial point")
    trace: list[float] = []
    converged = False
    max_ridge = 0.0
    for _ in range(max_iter):
        step, ridge = _solve_step(hess(free), grad(free), lam)
        max_ridge = max(max_ridge, ridge)
        scale = 1.0
        accepted = False
        for _ in range(MAX_STEP_HALVINGS + 1):
            cand = free + scale * step
            vc = value(cand)
            if np.isfinite(vc) and vc >= v - 1e-12 * (1.0 + abs(v)):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break  # no ascent direction left at 2^-30 of the Newton step
        delta = scale * step
        free, v = cand, vc
        trace.append(v)
        if lam == 0.0 and np.max(np.abs(free)) > SEPARATION_LIMIT:
            break  # diverging norm: separation, the unpenalized MLE does not exist
        if np.max(np.abs(delta)) < tol:
            converged = True
            break
    return free, v, converged, trace, max_ridge


def fit(data: MatrixDataset, config: FitConfig = FitConfig()) -> FitResult:
    """Maximize the penalized log-likelihood by Fisher scoring.

    Starts from zero free parameters (or ``config.init``), keeps the
    pinned alpha entry at 1 throughout, and reports non-convergence
    instead of looping forever under separation.
    """
    p, q = data.p, data.q
    if config.baseline_row is not None:
        baseline = config.baseline_row
        if not 0 <= baseline < p:
            raise ValidationError(f"baseline_row {baseline} out of range for p={p}")
    else:
        baseline = select_baseline_row(data)

    if config.init is not None:
        if config.init.baseline_row != baseline or (config.init.p, config.init.q) != (p, q):
            raise ValidationError("init parameter layout does not match data/baseline_row")
        free0 = config.init.free()
    else:
        free0 = np.zeros(p + q)

    mask = _penalty_mask(p + q, config.penalty_kind)

    def unpack(free: np.ndarray) -> ThetaParam:
        return ThetaParam.from_free(free, p, q, baseline)

    def value(free: np.ndarray) -> float:
        theta = unpack(free)
        return log_likelihood(theta, data) - config.lam * 0.5 * float((mask * free) @ free)

    def grad(free: np.ndarray) -> np.ndarray:
        return gradient(unpack(free), data, config)

    def hess(free: np.ndarray) -> np.ndarray:
        return fisher_hessian(unpack(free), data, config)

    free, v, converged, trace, ridge = _newton_ascent(
        free0, value, grad, hess, lam=config.lam, tol=config.tol, max_iter=config.max_iter)
    theta = unpack(free)
    return FitResult(
        theta=theta,
        converged=converged,
        iterations=len(trace),
        final_gradient_norm=float(np.max(np.abs(grad(free)))),
        loglik=log_likelihood(theta, data),
        penalized_loglik=v,
        trace=tuple(trace),
        hessian_ridge=ridge,
    )


def _vec_features(data: MatrixDataset) -> np.ndarray:
    """n x (1+pq) design [1 | vec(X_i)'] with column-major vec."""
    n = data.n
    z = np.empty((n, 1 + data.p * data.q))
    z[:, 0] = 1.0
    z[:, 1:] = data.matrices.transpose(0, 2, 1).reshape(n, -1)
    return z


def conventional_log_likelihood(gamma: float, xi: np.ndarray, data: MatrixDataset) -> float:
    """Log-likelihood of the unrestricted vec(X) logistic model at (gamma, xi)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (data.p * data.q,):
        raise ValidationError(f"xi must have length pq={data.p * data.q}, got {xi.shape}")
    eta = gamma + data.matrices.transpose(0, 2, 1).reshape(data.n, -1) @ xi
    return float(data.labels @ eta - np.logaddexp(0.0, eta).sum())


def fit_conventional(
    data: MatrixDataset,
    lam: float,
    penalty_kind: str = "no-intercept",
    tol: float = 1e-8,
    max_iter: int = 100,
) -> ConventionalFitResult:
    """Ridge logistic regression on vec(X) with the same Newton scheme."""
    if lam < 0:
        raise ValidationError("lam must be nonnegative")
    z = _vec_features(data)
    y = data.labels.astype(float)
    mask = _penalty_mask(z.shape[1], penalty_kind)

    def value(coef: np.ndarray) -> float:
        eta = z @ coef
        return float(y @ eta - np.logaddexp(0.0, eta).sum() - lam * 0.5 * (mask * coef) @ coef)

    def grad(coef: np.ndarray) -> np.ndarray:
        resid = y - expit(z @ coef)
        return z.T @ resid - lam * mask * coef

    def hess(coef: np.ndarray) -> np.ndarray:
        pi = expit(z @ coef)
        v = pi * (1.0 - pi)
        h = z.T @ (v[:, None] * z)
        h[np.diag_indices_from(h)] += lam * mask
        return 0.5 * (h + h.T)

    coef, v, converged, trace, ridge = _newton_ascent(
        np.zeros(z.shape[1]), value, grad, hess, lam=lam, tol=tol, max_iter=max_iter)
    eta = z @ coef
    return ConventionalFitResult(
        gamma=float(coef[0]),
        xi=coef[1:].copy(),
        converged=converged,
        iterations=len(trace),
        final_gradient_norm=float(np.max(np.abs(grad(coef)))),
        loglik=float(y @ eta - np.logaddexp(0.0, eta).sum()),
        penalized_loglik=v,
        trace=tuple(trace),
        hessian_ridge=ridge,
    )


def _cv_folds(labels: np.ndarray, scheme, seed: int) -> list[np.ndarray]:
    n = labels.size
    if scheme == "loo":
        return [np.array([i]) for i in range(n)]
    k = int(scheme)
    if not 2 <= k <= n:
        raise ValidationError(f"k-fold scheme needs 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    slot = 0
    for label in (0, 1):  # stratified: deal each class round-robin after a seeded shuffle
        idx = np.flatnonzero(labels == label)
        rng.shuffle(idx)
        for i in idx:
            folds[slot % k].append(int(i))
            slot += 1
    return [np.sort(np.array(f, dtype=int)) for f in folds if f]


def _subset(data: MatrixDataset, idx: np.ndarray) -> MatrixDataset:
    return MatrixDataset(data.matrices[idx], data.labels[idx])


def select_lambda_cv(
    data: MatrixDataset,
    lambda_grid,
    scheme="loo",
    *,
    model: str = "bilinear",
    penalty_kind: str = "no-intercept",
    baseline_row: int | None = None,
    seed: int = 0,
    threads: int = 1,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> tuple[float, list[tuple[float, float]]]:
    """Pick lambda by cross-validated classification accuracy.

    ``scheme`` is ``"loo"`` or an integer fold count (stratified, seeded
    shuffle).  Returns (best lambda, [(lambda, accuracy), ...]) with the
    grid sorted ascending, so ties resolve to the smallest lambda.
    ``model`` selects the bilinear fit or the conventional vec(X) arm.
    """
    grid = sorted(float(g) for g in lambda_grid)
    if not grid:
        raise ValidationError("lambda grid is empty")
    if model not in ("bilinear", "conventional"):
        raise ValidationError("model must be 'bilinear' or 'conventional'")
    folds = _cv_folds(data.labels, scheme, seed)
    if model == "bilinear" and baseline_row is None:
        baseline_row = select_baseline_row(data)

    def accuracy_for(lam: float) -> float:
        correct = 0
        for hold in folds:
            keep = np.setdiff1d(np.arange(data.n), hold, assume_unique=True)
            train = _subset(data, keep)
            if model == "bilinear":
                res = fit(train, FitConfig(lam=lam, penalty_kind=penalty_kind,
                                           baseline_row=baseline_row, tol=tol, max_iter=max_iter))
                eta = _predictors(res.theta, _subset(data, hold))
            else:
                res = fit_conventional(train, lam, penalty_kind, tol=tol, max_iter=max_iter)
                feats = data.matrices[hold].transpose(0, 2, 1).reshape(hold.size, -1)
                eta = res.gamma + feats @ res.xi
            correct += int(((expit(eta) > 0.5).astype(int) == data.labels[hold]).sum())
        return correct / data.n

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            accs = list(pool.map(accuracy_for, grid))
    else:
        accs = [accuracy_for(lam) for lam in grid]
    table = list(zip(grid, accs))
    best = max(table, key=lambda t: t[1])  # max() keeps the first (smallest lambda) on ties
    return best[0], table
