"""JSON and CSV persistence for datasets, models, and GLRAM bases.

Dataset JSON: {"p": int, "q": int, "labels": [...], "matrices":
[[[row-major rows] ...] ...]} plus "num_classes" for multi-class data.
CSV ingestion uses the header y,x_1_1,...,x_p_q with the covariate
columns in column-major order (x_1_1, x_2_1, ..., x_p_1, x_1_2, ...).

Model JSON: {"gamma", "alpha", "beta", "baseline_row",
"standardization", "lambda"} plus optional "penalty_kind",
"covariance" and "glram" blocks written by the fitting commands so that
prediction can replay center -> project -> standardize.

All writers emit canonical JSON (sorted keys, two-space indent, shortest
round-trip floats) so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .glram import GlramBases
from .inference import CovarianceEstimate
from .model import MatrixDataset, StandardizationStats, ThetaParam
from .multiclass import MultiClassDataset

__all__ = [
    "ModelArtifact",
    "canonical_json",
    "dataset_to_dict",
    "dataset_from_dict",
    "save_dataset",
    "load_dataset",
    "dataset_to_csv",
    "dataset_from_csv",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "bases_to_dict",
    "bases_from_dict",
]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def dataset_to_dict(data) -> dict:
    out = {
        "p": data.p,
        "q": data.q,
        "labels": data.labels.tolist(),
        "matrices": data.matrices.tolist(),
    }
    if isinstance(data, MultiClassDataset):
        out["num_classes"] = data.num_classes
    return out


def dataset_from_dict(doc: dict):
    try:
        matrices = np.asarray(doc["matrices"], dtype=float)
        labels = np.asarray(doc["labels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed dataset document: {exc}") from exc
    if matrices.ndim != 3:
        raise ValidationError("dataset matrices must be a list of p x q row lists")
    if "p" in doc and (matrices.shape[1] != doc["p"] or matrices.shape[2] != doc["q"]):
        raise ValidationError(
            f"declared (p, q)=({doc['p']}, {doc['q']}) but matrices are {matrices.shape[1:]}")
    if "num_classes" in doc:
        return MultiClassDataset(matrices, labels, num_classes=int(doc["num_classes"]))
    return MatrixDataset(matrices, labels)


def save_dataset(data, path) -> None:
    Path(path).write_text(canonical_json(dataset_to_dict(data)))


def load_dataset(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"dataset file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"dataset file is not valid JSON: {exc}") from exc
    return dataset_from_dict(doc)


def _csv_header(p: int, q: int) -> list[str]:
    return ["y"] + [f"x_{i + 1}_{j + 1}" for j in range(q) for i in range(p)]


def dataset_to_csv(data: MatrixDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_csv_header(data.p, data.q))
    flat = data.matrices.transpose(0, 2, 1).reshape(data.n, -1)  # column-major vec
    for label, row in zip(data.labels, flat):
        writer.writerow([int(label)] + [repr(float(v)) for v in row])
    return buf.getvalue()


def dataset_from_csv(text: str) -> MatrixDataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValidationError("empty CSV")
    header = rows[0]
    if header[:1] != ["y"]:
        raise ValidationError("CSV header must start with 'y'")
    names = header[1:]
    if not names:
        raise ValidationError("CSV has no covariate columns")
    last = names[-1].split("_")
    try:
        p, q = int(last[-2]), int(last[-1])
    except (ValueError, IndexError):
        raise ValidationError(f"cannot read (p, q) from last header cell {names[-1]!r}") from None
    if names != _csv_header(p, q)[1:]:
        raise ValidationError("CSV covariate columns are not x_1_1..x_p_q in column-major order")
    labels, mats = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 1 + p * q:
            raise ValidationError(f"CSV line {lineno}: expected {1 + p * q} cells, got {len(row)}")
        try:
            labels.append(int(float(row[0])))
            mats.append(np.array([float(v) for v in row[1:]]).reshape(p, q, order="F"))
        except ValueError as exc:
            raise ValidationError(f"CSV line {lineno}: {exc}") from exc
    return MatrixDataset(np.array(mats), np.array(labels))


@dataclass(frozen=True)
class ModelArtifact:
    """A fitted model plus the preprocessing needed to apply it."""

    theta: ThetaParam
    lam: float
    penalty_kind: str = "no-intercept"
    standardization: StandardizationStats | None = None
    covariance: CovarianceEstimate | None = None
    glram: GlramBases | None = None


def bases_to_dict(bases: GlramBases) -> dict:
    return {
        "A": bases.A.tolist(),
        "B": bases.B.tolist(),
        "centering": bases.centering.tolist(),
        "objective_trace": list(bases.objective_trace),
    }


def bases_from_dict(doc: dict) -> GlramBases:
    try:
        return GlramBases(
            A=np.asarray(doc["A"], dtype=float),
            B=np.asarray(doc["B"], dtype=float),
            centering=np.asarray(doc["centering"], dtype=float),
            objective_trace=tuple(doc.get("objective_trace", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed GLRAM bases document: {exc}") from exc


def model_to_dict(artifact: ModelArtifact) -> dict:
    std = None
    if artifact.standardization is not None:
        std = {
            "means": artifact.standardization.means.tolist(),
            "sds": artifact.standardization.sds.tolist(),
            "constant": artifact.standardization.constant.astype(int).tolist(),
        }
    out = {
        "gamma": artifact.theta.gamma,
        "alpha": artifact.theta.alpha.tolist(),
        "beta": artifact.theta.beta.tolist(),
        "baseline_row": artifact.theta.baseline_row,
        "standardization": std,
        "lambda": artifact.lam,
        "penalty_kind": artifact.penalty_kind,
    }
    if artifact.covariance is not None:
        out["covariance"] = {
            "sigma_hat": artifact.covariance.sigma_hat.tolist(),
            "n": artifact.covariance.n,
        }
    if artifact.glram is not None:
        out["glram"] = bases_to_dict(artifact.glram)
    return out


def model_from_dict(doc: dict) -> ModelArtifact:
    try:
        theta = ThetaParam(
            gamma=float(doc["gamma"]),
            alpha=np.asarray(doc["alpha"], dtype=float),
            beta=np.asarray(doc["beta"], dtype=float),
            baseline_row=int(doc["baseline_row"]),
        )
        lam = float(doc["lambda"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model document: {exc}") from exc
    std = None
    if doc.get("standardization") is not None:
        s = doc["standardization"]
        std = StandardizationStats(
            means=np.asarray(s["means"], dtype=float),
            sds=np.asarray(s["sds"], dtype=float),
            constant=np.asarray(s.get("constant", np.zeros_like(s["means"])), dtype=bool),
        )
    cov = None
    if doc.get("covariance") is not None:
        cov = CovarianceEstimate(
            sigma_hat=np.asarray(doc["covariance"]["sigma_hat"], dtype=float),
            n=int(doc["covariance"]["n"]),
        )
    bases = bases_from_dict(doc["glram"]) if doc.get("glram") is not None else None
    return ModelArtifact(
        theta=theta,
        lam=lam,
        penalty_kind=doc.get("penalty_kind", "no-intercept"),
        standardization=std,
        covariance=cov,
        glram=bases,
    )


def save_model(artifact: ModelArtifact, path) -> None:
    Path(path).write_text(canonical_json(model_to_dict(artifact)))


def load_model(path) -> ModelArtifact:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)
