"""Monte-Carlo data generators, metrics, and the study driver.

Two sampling regimes share one design type: with ``sigma == 0`` the
response follows the rank-1 bilinear model exactly; with ``sigma > 0``
the coefficient matrix is xi = alpha beta' + delta with iid N(0, sigma^2)
perturbations, so the bilinear model is misspecified by a controlled
amount.  Each replicate draws its own delta, then a training set and an
independent test set of the same size from that replicate's xi.

Per-replicate RNG streams are spawned from the master seed, so reports
are reproducible and independent of evaluation order or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import NumericalError, ValidationError
from .inference import covariance_estimate
from .model import MatrixDataset, ThetaParam
from .solver import FitConfig, fit, fit_conventional

__all__ = [
    "SimDesign",
    "SimReport",
    "reference_pattern",
    "generate_mv_data",
    "generate_perturbed_data",
    "explained_proportion",
    "similarity",
    "empirical_kl",
    "calibrate_arm_lambdas",
    "run_study",
]


def reference_pattern(p: int, q: int) -> ThetaParam:
    """Structured truth used throughout the studies.

    gamma=1, alpha=(1, 0.5, -0.5, ..., -0.5), beta=(1, 0.5, 1, -1, ..., -1),
    baseline pinned at row 0.  Needs p >= 2 and q >= 3.
    """
    if p < 2 or q < 3:
        raise ValidationError(f"pattern needs p >= 2 and q >= 3, got ({p}, {q})")
    alpha = np.concatenate(([1.0, 0.5], -0.5 * np.ones(p - 2)))
    beta = np.concatenate(([1.0, 0.5, 1.0], -np.ones(q - 3)))
    return ThetaParam(gamma=1.0, alpha=alpha, beta=beta, baseline_row=0)


@dataclass(frozen=True)
class SimDesign:
    """One Monte-Carlo cell: dimensions, truth, perturbation, arm lambdas."""

    p: int
    q: int
    n: int
    sigma: float = 0.0
    replicates: int = 200
    seed: int = 0
    lambda_mv: float = 0.0
    lambda_conventional: float = 0.0
    penalty_kind: str = "no-intercept"
    test_size: int | None = None
    theta_true: ThetaParam | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        if self.theta_true is None:
            object.__setattr__(self, "theta_true", reference_pattern(self.p, self.q))
        tt = self.theta_true
        if (tt.p, tt.q) != (self.p, self.q):
            raise ValidationError("theta_true dimensions do not match design")

    @property
    def resolved_test_size(self) -> int:
        return self.n if self.test_size is None else self.test_size


def _draw_xi(design: SimDesign, rng: np.random.Generator) -> np.ndarray:
    tt = design.theta_true
    return np.outer(tt.alpha, tt.beta) + design.sigma * rng.standard_normal((design.p, design.q))


def _draw_given_xi(design: SimDesign, xi: np.ndarray, rng: np.random.Generator, n: int) -> MatrixDataset:
    x = rng.standard_normal((n, design.p, design.q))
    eta = design.theta_true.gamma + np.einsum("npq,pq->n", x, xi)
    y = (rng.random(n) < expit(eta)).astype(int)
    return MatrixDataset(x, y)


def generate_mv_data(design: SimDesign, replicate_seed) -> MatrixDataset:
    """Training data from the exact bilinear model: vec(X) ~ N(0, I)."""
    rng = np.random.default_rng(replicate_seed)
    tt = design.theta_true
    return _draw_given_xi(design, np.outer(tt.alpha, tt.beta), rng, design.n)


def generate_perturbed_data(design: SimDesign, replicate_seed) -> tuple[MatrixDataset, np.ndarray]:
    """Data from the unrestricted model with xi = alpha beta' + delta.

    delta has iid N(0, sigma^2) entries redrawn per call; at sigma=0 the
    returned xi equals alpha beta' exactly.  The drawn xi is returned
    for rank-1 adequacy diagnostics.
    """
    rng = np.random.default_rng(replicate_seed)
    xi = _draw_xi(design, rng)
    return _draw_given_xi(design, xi, rng, design.n), xi


def explained_proportion(xi: np.ndarray) -> float:
    """Top singular value over the sum of all singular values of xi."""
    xi = np.asarray(xi, dtype=float)
    s = np.linalg.svd(xi, compute_uv=False)
    total = s.sum()
    if total == 0.0:
        raise ValidationError("explained proportion is undefined for the zero matrix")
    return float(s[0] / total)


def similarity(theta_true: ThetaParam, theta_hat: ThetaParam) -> float:
    """Cosine between (gamma, beta (x) alpha) vectors of truth and estimate.

    beta (x) alpha is vec(alpha beta') in column-major order, so the
    metric ignores the arbitrary (1/c, c) rescaling of (alpha, beta).
    """
    if (theta_true.p, theta_true.q) != (theta_hat.p, theta_hat.q):
        raise ValidationError("parameter dimensions do not match")
    u = np.concatenate(([theta_true.gamma], np.kron(theta_true.beta, theta_true.alpha)))
    v = np.concatenate(([theta_hat.gamma], np.kron(theta_hat.beta, theta_hat.alpha)))
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("similarity is undefined for a zero coefficient vector")
    return float(u @ v / (nu * nv))


def empirical_kl(theta_full: tuple[float, np.ndarray], theta_rank1: ThetaParam, matrices: np.ndarray) -> float:
    """Average binary KL divergence between the two conditional laws.

    ``theta_full`` is (gamma, xi) with xi a p x q matrix; the expectation
    over X is replaced by the average over the supplied matrices.  Zero
    iff the two predictors agree on every matrix.
    """
    gamma0, xi0 = theta_full
    xi0 = np.asarray(xi0, dtype=float)
    matrices = np.asarray(matrices, dtype=float)
    if matrices.ndim != 3 or matrices.shape[-2:] != xi0.shape:
        raise ValidationError("matrices do not match the coefficient matrix shape")
    if xi0.shape != (theta_rank1.p, theta_rank1.q):
        raise ValidationError("full and rank-1 parameter dimensions differ")
    eta0 = gamma0 + np.einsum("npq,pq->n", matrices, xi0)
    eta1 = theta_rank1.gamma + np.einsum(
        "npq,p,q->n", matrices, theta_rank1.alpha, theta_rank1.beta)
    p0 = expit(eta0)
    # log pi and log(1-pi) via log-sigmoid keeps the tails exact
    kl = p0 * (log_expit(eta0) - log_expit(eta1)) + (1.0 - p0) * (log_expit(-eta0) - log_expit(-eta1))
    return float(np.maximum(kl, 0.0).mean())


@dataclass(frozen=True)
class SimReport:
    """Aggregated Monte-Carlo outputs for one design cell."""

    design: SimDesign
    theta_true_free: np.ndarray
    theta_mean: np.ndarray
    theta_sd: np.ndarray
    se_mean: np.ndarray
    similarity_mean: float
    similarity_sd: float
    accuracy_mv: float
    accuracy_conventional: float
    winning_proportion: float
    rho_mean: float
    replicates_used: int
    replicates_excluded: int

    def __post_init__(self):
        if not 0.0 <= self.winning_proportion <= 1.0:
            raise ValidationError("winning proportion must lie in [0, 1]")
        for name in ("accuracy_mv", "accuracy_conventional"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")

    def coordinate_names(self) -> list[str]:
        p, q = self.design.p, self.design.q
        rows = [r for r in range(p) if r != self.design.theta_true.baseline_row]
        return (["gamma"] + [f"alpha[{r}]" for r in rows] + [f"beta[{c}]" for c in range(q)])

    def to_dict(self) -> dict:
        d = self.design
        return {
            "design": {
                "p": d.p, "q": d.q, "n": d.n, "sigma": d.sigma,
                "replicates": d.replicates, "seed": d.seed,
                "lambda_mv": d.lambda_mv, "lambda_conventional": d.lambda_conventional,
                "penalty_kind": d.penalty_kind, "test_size": d.resolved_test_size,
                "baseline_row": d.theta_true.baseline_row,
            },
            "coordinates": self.coordinate_names(),
            "theta_true": self.theta_true_free.tolist(),
            "theta_mean": self.theta_mean.tolist(),
            "theta_sd": self.theta_sd.tolist(),
            "se_mean": self.se_mean.tolist(),
            "similarity_mean": self.similarity_mean,
            "similarity_sd": self.similarity_sd,
            "accuracy_mv": self.accuracy_mv,
            "accuracy_conventional": self.accuracy_conventional,
            "winning_proportion": self.winning_proportion,
            "rho_mean": self.rho_mean,
            "replicates_used": self.replicates_used,
            "replicates_excluded": self.replicates_excluded,
        }


def _replicate(design: SimDesign, seed) -> dict | None:
    rng = np.random.default_rng(seed)
    xi = _draw_xi(design, rng)
    train = _draw_given_xi(design, xi, rng, design.n)
    test = _draw_given_xi(design, xi, rng, design.resolved_test_size)
    baseline = design.theta_true.baseline_row
    config = FitConfig(lam=design.lambda_mv, penalty_kind=design.penalty_kind,
                       baseline_row=baseline)
    try:
        mv = fit(train, config)
        cov = covariance_estimate(mv, train, config)
        conv = fit_conventional(train, design.lambda_conventional, design.penalty_kind)
    except NumericalError:
        return None
    eta_mv = mv.theta.gamma + np.einsum(
        "npq,p,q->n", test.matrices, mv.theta.alpha, mv.theta.beta)
    feats = test.matrices.transpose(0, 2, 1).reshape(test.n, -1)
    eta_conv = conv.gamma + feats @ conv.xi
    return {
        "theta": mv.theta.free(),
        "se": cov.standard_errors(),
        "similarity": similarity(design.theta_true, mv.theta),
        "acc_mv": float(((eta_mv > 0.0).astype(int) == test.labels).mean()),
        "acc_conv": float(((eta_conv > 0.0).astype(int) == test.labels).mean()),
        "rho": explained_proportion(xi),
    }


def run_study(design: SimDesign, threads: int = 1) -> SimReport:
    """Run every replicate of a design cell and aggregate.

    Fit failures are excluded and counted; everything else is averaged
    in replicate order, so the report is invariant to thread count.
    """
    seeds = np.random.SeedSequence(design.seed).spawn(design.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda s: _replicate(design, s), seeds))
    else:
        rows = [_replicate(design, s) for s in seeds]
    kept = [r for r in rows if r is not None]
    if not kept:
        raise NumericalError("every replicate failed to fit")
    thetas = np.array([r["theta"] for r in kept])
    ses = np.array([r["se"] for r in kept])
    sims = np.array([r["similarity"] for r in kept])
    acc_mv = np.array([r["acc_mv"] for r in kept])
    acc_conv = np.array([r["acc_conv"] for r in kept])
    rhos = np.array([r["rho"] for r in kept])
    ddof = 1 if len(kept) > 1 else 0
    return SimReport(
        design=design,
        theta_true_free=design.theta_true.free(),
        theta_mean=thetas.mean(axis=0),
        theta_sd=thetas.std(axis=0, ddof=ddof),
        se_mean=ses.mean(axis=0),
        similarity_mean=float(sims.mean()),
        similarity_sd=float(sims.std(ddof=ddof)),
        accuracy_mv=float(acc_mv.mean()),
        accuracy_conventional=float(acc_conv.mean()),
        winning_proportion=float((acc_mv > acc_conv).mean()),
        rho_mean=float(rhos.mean()),
        replicates_used=len(kept),
        replicates_excluded=len(rows) - len(kept),
    )


def calibrate_arm_lambdas(
    design: SimDesign,
    mv_grid,
    conventional_grid,
    replicates: int = 50,
    seed: int = 1,
) -> tuple[float, float, dict]:
    """Pre-study: pick each arm's lambda by mean test accuracy.

    Runs ``replicates`` calibration draws independent of the main study
    seed, evaluates every grid value on the same draws, and returns the
    per-arm argmax (smallest lambda on ties) plus the accuracy tables.
    """
    mv_grid = sorted(float(g) for g in mv_grid)
    conventional_grid = sorted(float(g) for g in conventional_grid)
    if not mv_grid or not conventional_grid:
        raise ValidationError("calibration grids must be nonempty")
    seeds = np.random.SeedSequence(seed).spawn(replicates)
    draws = []
    for s in seeds:
        rng = np.random.default_rng(s)
        xi = _draw_xi(design, rng)
        draws.append((_draw_given_xi(design, xi, rng, design.n),
                      _draw_given_xi(design, xi, rng, design.resolved_test_size)))
    baseline = design.theta_true.baseline_row

    mv_table = []
    for lam in mv_grid:
        config = FitConfig(lam=lam, penalty_kind=design.penalty_kind, baseline_row=baseline)
        accs = []
        for train, test in draws:
            theta = fit(train, config).theta
            eta = theta.gamma + np.einsum("npq,p,q->n", test.matrices, theta.alpha, theta.beta)
            accs.append(((eta > 0.0).astype(int) == test.labels).mean())
        mv_table.append((lam, float(np.mean(accs))))

    conv_table = []
    for lam in conventional_grid:
        accs = []
        for train, test in draws:
            res = fit_conventional(train, lam, design.penalty_kind)
            feats = test.matrices.transpose(0, 2, 1).reshape(test.n, -1)
            eta = res.gamma + feats @ res.xi
            accs.append(((eta > 0.0).astype(int) == test.labels).mean())
        conv_table.append((lam, float(np.mean(accs))))

    best_mv = max(mv_table, key=lambda t: t[1])[0]
    best_conv = max(conv_table, key=lambda t: t[1])[0]
    return best_mv, best_conv, {"bilinear": mv_table, "conventional": conv_table}
