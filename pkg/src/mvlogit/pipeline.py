"""End-to-end evaluation pipeline and prediction helpers.

The pipeline mirrors the preprocessing order used at fit time:
GLRAM projection (which centers), per-entry standardization, baseline
row selection, then lambda chosen to maximize cross-validated
classification accuracy for each arm.  By default GLRAM and the
standardization are computed once on the full data (the selection is
therefore mildly optimistic); ``nested=True`` recomputes both inside
every fold.

Prediction replays the stored artifacts: center -> project ->
standardize -> evaluate, and refuses to guess when an artifact is
missing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ValidationError
from .glram import glram_fit, glram_project
from .inference import covariance_estimate, probability_ci, theta_ci
from .model import MatrixDataset, select_baseline_row, standardize
from .serialize import ModelArtifact
from .solver import FitConfig, fit, fit_conventional, select_lambda_cv

__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "PcaBaselineResult",
    "eeg_pipeline",
    "pca_baseline",
    "apply_preprocessing",
    "predict_with_model",
]


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for the projection -> standardize -> fit pipeline."""

    p0: int
    q0: int
    lambda_grid: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0, 32.0, 64.0)
    penalty_kind: str = "all-theta"
    scheme: object = "loo"  # "loo" or an integer fold count
    level: float = 0.95
    nested: bool = False
    seed: int = 0
    threads: int = 1
    condition: str = "single"

    def __post_init__(self):
        if self.p0 < 1 or self.q0 < 1:
            raise ValidationError("p0 and q0 must be positive")
        if not self.lambda_grid:
            raise ValidationError("lambda grid must be nonempty")


@dataclass(frozen=True)
class PipelineResult:
    report: dict
    artifact: ModelArtifact


@dataclass(frozen=True)
class PcaBaselineResult:
    accuracy: float
    selected_lambda: float
    table: list[tuple[float, float]]
    r: int


def _nested_accuracy(data: MatrixDataset, config: PipelineConfig, lam: float, arm: str) -> float:
    """LOO/k-fold accuracy recomputing GLRAM + standardization per fold."""
    from .solver import _cv_folds, _predictors, _subset

    folds = _cv_folds(data.labels, config.scheme, config.seed)
    correct = 0
    for hold in folds:
        keep = np.setdiff1d(np.arange(data.n), hold, assume_unique=True)
        train_raw = _subset(data, keep)
        bases = glram_fit(train_raw.matrices, config.p0, config.q0)
        train_proj = MatrixDataset(glram_project(bases, train_raw.matrices), train_raw.labels)
        train_std, stats = standardize(train_proj)
        held = stats.apply(glram_project(bases, data.matrices[hold]))
        if arm == "bilinear":
            res = fit(train_std, FitConfig(lam=lam, penalty_kind=config.penalty_kind))
            eta = np.array([
                res.theta.gamma + res.theta.alpha @ m @ res.theta.beta for m in held])
        else:
            res = fit_conventional(train_std, lam, config.penalty_kind)
            feats = held.transpose(0, 2, 1).reshape(hold.size, -1)
            eta = res.gamma + feats @ res.xi
        correct += int(((eta > 0.0).astype(int) == data.labels[hold]).sum())
    return correct / data.n


def eeg_pipeline(data: MatrixDataset, config: PipelineConfig) -> PipelineResult:
    """Project, standardize, tune, and evaluate both arms on one dataset.

    Returns the evaluation report plus a reusable model artifact
    (fitted coefficients, the GLRAM bases, and the standardization).
    """
    bases = glram_fit(data.matrices, config.p0, config.q0)
    projected = MatrixDataset(glram_project(bases, data.matrices), data.labels)
    std_data, stats = standardize(projected)
    baseline = select_baseline_row(std_data)

    if config.nested:
        grid = sorted(float(g) for g in config.lambda_grid)
        table_mv = [(lam, _nested_accuracy(data, config, lam, "bilinear")) for lam in grid]
        table_conv = [(lam, _nested_accuracy(data, config, lam, "conventional")) for lam in grid]
        lam_mv, acc_mv = max(table_mv, key=lambda t: t[1])
        lam_conv, acc_conv = max(table_conv, key=lambda t: t[1])
    else:
        lam_mv, table_mv = select_lambda_cv(
            std_data, config.lambda_grid, config.scheme, model="bilinear",
            penalty_kind=config.penalty_kind, baseline_row=baseline,
            seed=config.seed, threads=config.threads)
        lam_conv, table_conv = select_lambda_cv(
            std_data, config.lambda_grid, config.scheme, model="conventional",
            penalty_kind=config.penalty_kind, seed=config.seed, threads=config.threads)
        acc_mv = dict(table_mv)[lam_mv]
        acc_conv = dict(table_conv)[lam_conv]

    fit_config = FitConfig(lam=lam_mv, penalty_kind=config.penalty_kind, baseline_row=baseline)
    final = fit(std_data, fit_config)
    cov = covariance_estimate(final, std_data, fit_config)

    p0, q0 = config.p0, config.q0
    free_index = {}  # (kind, position) -> free coordinate index
    rows = [r for r in range(p0) if r != baseline]
    for j, r in enumerate(rows):
        free_index[("alpha", r)] = 1 + j
    for c in range(q0):
        free_index[("beta", c)] = p0 + c

    def ci_pair(kind: str, pos: int):
        idx = free_index.get((kind, pos))
        if idx is None:
            return None  # the pinned alpha entry has no interval
        ci = theta_ci(final, cov, idx, config.level)
        return [ci.lower, ci.upper]

    gamma_ci = theta_ci(final, cov, 0, config.level)
    coefficients = {
        "gamma": final.theta.gamma,
        "gamma_ci": [gamma_ci.lower, gamma_ci.upper],
        "alpha": final.theta.alpha.tolist(),
        "alpha_ci": [ci_pair("alpha", r) for r in range(p0)],
        "beta": final.theta.beta.tolist(),
        "beta_ci": [ci_pair("beta", c) for c in range(q0)],
        "baseline_row": baseline,
    }

    # leave-one-out probability (with band) for every subject at the chosen lambda
    def loo_probability(i: int) -> dict:
        keep = np.delete(np.arange(data.n), i)
        train = MatrixDataset(std_data.matrices[keep], std_data.labels[keep])
        res = fit(train, fit_config)
        c = covariance_estimate(res, train, fit_config)
        x = std_data.matrices[i]
        ci = probability_ci(res, c, x, config.level)
        prob = float(expit(res.theta.gamma + res.theta.alpha @ x @ res.theta.beta))
        return {
            "subject": i,
            "label": int(data.labels[i]),
            "probability": prob,
            "lower": ci.lower,
            "upper": ci.upper,
        }

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            subject_rows = list(pool.map(loo_probability, range(data.n)))
    else:
        subject_rows = [loo_probability(i) for i in range(data.n)]

    report = {
        "config": {
            "p0": p0, "q0": q0, "lambda_grid": sorted(float(g) for g in config.lambda_grid),
            "penalty_kind": config.penalty_kind, "scheme": config.scheme,
            "level": config.level, "nested": config.nested, "seed": config.seed,
            "condition": config.condition,
        },
        "n_subjects": data.n,
        "n_alcoholic": int(data.labels.sum()),
        "n_control": int(data.n - data.labels.sum()),
        "baseline_row": baseline,
        "lambda_mv": lam_mv,
        "lambda_conventional": lam_conv,
        "loo_accuracy_mv": acc_mv,
        "loo_accuracy_conventional": acc_conv,
        "lambda_table_mv": [[lam, acc] for lam, acc in table_mv],
        "lambda_table_conventional": [[lam, acc] for lam, acc in table_conv],
        "coefficients": coefficients,
        "subject_probabilities": subject_rows,
        "glram_objective": list(bases.objective_trace),
    }
    artifact = ModelArtifact(
        theta=final.theta,
        lam=lam_mv,
        penalty_kind=config.penalty_kind,
        standardization=stats,
        covariance=cov,
        glram=bases,
    )
    return PipelineResult(report=report, artifact=artifact)


def pca_baseline(
    data: MatrixDataset,
    r: int,
    lambda_grid,
    scheme="loo",
    penalty_kind: str = "no-intercept",
    seed: int = 0,
    threads: int = 1,
) -> PcaBaselineResult:
    """Vectorize, take the top-r principal component scores, tune, score.

    The scores feed the conventional penalized logistic model; the
    returned accuracy is the best cross-validated accuracy over the
    lambda grid.
    """
    if not 1 <= r <= data.n - 1:
        raise ValidationError(f"r must lie in 1..n-1={data.n - 1}, got {r}")
    flat = data.matrices.transpose(0, 2, 1).reshape(data.n, -1)
    centered = flat - flat.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    scores = centered @ vt[:r].T
    score_data = MatrixDataset(scores[:, :, None], data.labels)
    lam, table = select_lambda_cv(
        score_data, lambda_grid, scheme, model="conventional",
        penalty_kind=penalty_kind, seed=seed, threads=threads)
    return PcaBaselineResult(accuracy=dict(table)[lam], selected_lambda=lam, table=table, r=r)


def apply_preprocessing(artifact: ModelArtifact, matrices: np.ndarray) -> np.ndarray:
    """Center -> project -> standardize raw matrices with stored artifacts."""
    matrices = np.asarray(matrices, dtype=float)
    if matrices.ndim == 2:
        matrices = matrices[None, :, :]
    theta_shape = (artifact.theta.p, artifact.theta.q)
    if artifact.glram is not None:
        in_shape = artifact.glram.centering.shape
        if matrices.shape[1:] == in_shape:
            matrices = glram_project(artifact.glram, matrices)
        elif matrices.shape[1:] != theta_shape:
            raise ValidationError(
                f"data shape {matrices.shape[1:]} matches neither the stored projection input "
                f"{in_shape} nor the model dimensions {theta_shape}")
    if artifact.standardization is not None and matrices.shape[1:] == artifact.standardization.means.shape:
        matrices = artifact.standardization.apply(matrices)
    if matrices.shape[1:] != theta_shape:
        raise ValidationError(
            f"data shape {matrices.shape[1:]} does not match the model dimensions {theta_shape}; "
            "the model stores no preprocessing that bridges the gap")
    return matrices


def predict_with_model(artifact: ModelArtifact, matrices: np.ndarray,
                       level: float | None = 0.95) -> list[dict]:
    """Per-subject predicted label, probability, and probability interval."""
    prepared = apply_preprocessing(artifact, matrices)
    theta = artifact.theta
    rows = []
    for i, x in enumerate(prepared):
        eta = theta.gamma + theta.alpha @ x @ theta.beta
        row = {
            "subject": i,
            "probability": float(expit(eta)),
            "label": int(eta > 0.0),
        }
        if level is not None:
            if artifact.covariance is None:
                raise ValidationError(
                    "model stores no covariance estimate; refit with covariance or pass level=None")
            fake = _FitView(theta)
            ci = probability_ci(fake, artifact.covariance, x, level)
            row["lower"], row["upper"], row["level"] = ci.lower, ci.upper, level
        rows.append(row)
    return rows


class _FitView:
    """Minimal stand-in exposing .theta for interval helpers."""

    def __init__(self, theta):
        self.theta = theta
