"""Command-line surface.

Commands: ingest-eeg, glram, fit, cv, infer, predict, simulate,
eeg-pipeline, pca-baseline.  Global flags (--seed, --threads, --out,
--format) are accepted after any subcommand.  Exit codes: 0 success,
2 validation error, 3 numerical failure.  Relative input paths that do
not exist are retried under $MVLOGIT_DATA_DIR.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from .eeg import CONDITIONS, ingest_eeg
from .errors import NumericalError, ValidationError
from .glram import glram_fit
from .inference import covariance_estimate, probability_ci, theta_ci
from .model import classify, select_baseline_row, standardize
from .pipeline import PipelineConfig, eeg_pipeline, pca_baseline, predict_with_model
from .serialize import (
    ModelArtifact,
    bases_to_dict,
    canonical_json,
    dataset_from_csv,
    load_dataset,
    load_model,
    model_to_dict,
    save_model,
)
from .simulation import SimDesign, run_study
from .solver import FitConfig, fit, select_lambda_cv


def _resolve_input(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    root = os.environ.get("MVLOGIT_DATA_DIR")
    if root:
        candidate = Path(root) / path
        if candidate.exists():
            return candidate
    raise ValidationError(f"input path not found: {path}")


def _load_any_dataset(path: str):
    p = _resolve_input(path)
    if p.suffix == ".csv":
        return dataset_from_csv(p.read_text())
    return load_dataset(p)


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse lambda grid {text!r}") from None


def _parse_scheme(text: str):
    if text == "loo":
        return "loo"
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"scheme must be 'loo' or a fold count, got {text!r}") from None


def _emit(args, payload, csv_text: str | None = None) -> None:
    if args.format == "csv":
        if csv_text is None:
            raise ValidationError("this command has no CSV rendering; use --format json")
        text = csv_text
    else:
        text = canonical_json(payload)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _cmd_ingest_eeg(args) -> None:
    directory = args.dir or os.environ.get("MVLOGIT_DATA_DIR")
    if not directory:
        raise ValidationError("pass --dir or set MVLOGIT_DATA_DIR")
    data = ingest_eeg(_resolve_input(directory), condition=args.condition)
    from .serialize import dataset_to_dict

    _emit(args, dataset_to_dict(data))


def _cmd_glram(args) -> None:
    data = _load_any_dataset(args.data)
    bases = glram_fit(data.matrices, args.p0, args.q0, tol=args.tol, max_iter=args.max_iter)
    _emit(args, bases_to_dict(bases))


def _fit_report(result, data, config: FitConfig) -> dict:
    theta = result.theta
    correct = sum(classify(theta, x) == y for x, y in zip(data.matrices, data.labels))
    return {
        "converged": result.converged,
        "iterations": result.iterations,
        "final_gradient_norm": result.final_gradient_norm,
        "loglik": result.loglik,
        "penalized_loglik": result.penalized_loglik,
        "hessian_ridge": result.hessian_ridge,
        "lambda": config.lam,
        "penalty_kind": config.penalty_kind,
        "baseline_row": theta.baseline_row,
        "in_sample_accuracy": correct / data.n,
    }


def _cmd_fit(args) -> None:
    data = _load_any_dataset(args.data)
    stats = None
    if args.standardize:
        data, stats = standardize(data)
    config = FitConfig(lam=args.lam, penalty_kind=args.penalty, tol=args.tol,
                       max_iter=args.max_iter, baseline_row=args.baseline_row)
    result = fit(data, config)
    cov = covariance_estimate(result, data, config)
    artifact = ModelArtifact(theta=result.theta, lam=args.lam, penalty_kind=args.penalty,
                             standardization=stats, covariance=cov)
    if args.out:
        save_model(artifact, args.out)
    report = _fit_report(result, data, config)
    if not args.out:
        report["model"] = model_to_dict(artifact)
    sys.stdout.write(canonical_json(report))
    if args.trace_csv:
        rows = [{"iteration": i + 1, "penalized_loglik": v} for i, v in enumerate(result.trace)]
        Path(args.trace_csv).write_text(_table_csv(rows))


def _cmd_cv(args) -> None:
    data = _load_any_dataset(args.data)
    lam, table = select_lambda_cv(
        data, _parse_grid(args.grid), _parse_scheme(args.scheme), model=args.model,
        penalty_kind=args.penalty, baseline_row=args.baseline_row,
        seed=args.seed, threads=args.threads)
    payload = {
        "selected_lambda": lam,
        "scheme": args.scheme,
        "model": args.model,
        "table": [[l, a] for l, a in table],
    }
    rows = [{"lambda": l, "accuracy": a} for l, a in table]
    _emit(args, payload, _table_csv(rows))


def _cmd_infer(args) -> None:
    from scipy.special import expit

    from .model import MatrixDataset
    from .pipeline import apply_preprocessing
    from .solver import FitResult

    artifact = load_model(_resolve_input(args.model))
    data = _load_any_dataset(args.data)
    prepared = MatrixDataset(apply_preprocessing(artifact, data.matrices), data.labels)
    # Covariance is evaluated at the stored parameters on the supplied
    # (training) data; no refit happens here.
    config = FitConfig(lam=artifact.lam, penalty_kind=artifact.penalty_kind,
                       baseline_row=artifact.theta.baseline_row)
    view = FitResult(theta=artifact.theta, converged=True, iterations=0,
                     final_gradient_norm=0.0, loglik=0.0, penalized_loglik=0.0, trace=())
    cov = covariance_estimate(view, prepared, config)
    free = artifact.theta.free()
    names = (["gamma"]
             + [f"alpha[{r}]" for r in range(artifact.theta.p) if r != artifact.theta.baseline_row]
             + [f"beta[{c}]" for c in range(artifact.theta.q)])
    ses = cov.standard_errors()
    coef_rows = []
    for i, name in enumerate(names):
        ci = theta_ci(view, cov, i, args.level)
        coef_rows.append({
            "coordinate": name,
            "estimate": float(free[i]),
            "se": float(ses[i]),
            "lower": ci.lower,
            "upper": ci.upper,
        })
    payload = {
        "level": args.level,
        "n": prepared.n,
        "coefficients": coef_rows,
    }
    if args.subject_probabilities:
        subject_rows = []
        for i in range(prepared.n):
            x = prepared.matrices[i]
            ci = probability_ci(view, cov, x, args.level)
            subject_rows.append({
                "subject": i,
                "label": int(prepared.labels[i]),
                "probability": float(expit(
                    artifact.theta.gamma + artifact.theta.alpha @ x @ artifact.theta.beta)),
                "lower": ci.lower,
                "upper": ci.upper,
            })
        payload["subject_probabilities"] = subject_rows
    _emit(args, payload, _table_csv(coef_rows))


def _cmd_predict(args) -> None:
    artifact = load_model(_resolve_input(args.model))
    data = _load_any_dataset(args.data)
    level = None if args.no_interval else args.level
    rows = predict_with_model(artifact, data.matrices, level=level)
    _emit(args, {"predictions": rows}, _table_csv(rows))


def _cmd_simulate(args) -> None:
    doc = json.loads(_resolve_input(args.design).read_text())
    try:
        design = SimDesign(
            p=int(doc["p"]), q=int(doc["q"]), n=int(doc["n"]),
            sigma=float(doc.get("sigma", 0.0)),
            replicates=int(args.replicates if args.replicates else doc.get("replicates", 200)),
            seed=int(doc.get("seed", 0) if args.seed is None else args.seed),
            lambda_mv=float(doc.get("lambda_mv", 0.0)),
            lambda_conventional=float(doc.get("lambda_conventional", 0.0)),
            penalty_kind=doc.get("penalty_kind", "no-intercept"),
            test_size=doc.get("test_size"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed design document: {exc}") from exc
    report = run_study(design, threads=args.threads)
    d = report.to_dict()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["coordinate", "true", "mean", "sd", "se"])
    for name, t, m, s, e in zip(d["coordinates"], d["theta_true"], d["theta_mean"],
                                d["theta_sd"], d["se_mean"]):
        writer.writerow([name, repr(t), repr(m), repr(s), repr(e)])
    writer.writerow([])
    for key in ("similarity_mean", "similarity_sd", "accuracy_mv", "accuracy_conventional",
                "winning_proportion", "rho_mean", "replicates_used", "replicates_excluded"):
        writer.writerow([key, repr(d[key])])
    _emit(args, d, buf.getvalue())


def _cmd_eeg_pipeline(args) -> None:
    data = _load_any_dataset(args.data)
    config = PipelineConfig(
        p0=args.p0, q0=args.q0, lambda_grid=tuple(_parse_grid(args.grid)),
        penalty_kind=args.penalty, scheme=_parse_scheme(args.scheme),
        level=args.level, nested=args.nested, seed=args.seed, threads=args.threads)
    result = eeg_pipeline(data, config)
    if args.model_out:
        save_model(result.artifact, args.model_out)
    _emit(args, result.report)


def _cmd_pca_baseline(args) -> None:
    data = _load_any_dataset(args.data)
    res = pca_baseline(data, args.r, _parse_grid(args.grid), _parse_scheme(args.scheme),
                       penalty_kind=args.penalty, seed=args.seed, threads=args.threads)
    payload = {
        "r": res.r,
        "accuracy": res.accuracy,
        "selected_lambda": res.selected_lambda,
        "table": [[l, a] for l, a in res.table],
    }
    _emit(args, payload, _table_csv([{"lambda": l, "accuracy": a} for l, a in res.table]))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master RNG seed (default 0; simulate falls back to the design's seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for folds/replicates")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = argparse.ArgumentParser(prog="mvlogit",
                                     description="Rank-1 bilinear logistic regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-eeg", parents=[common], help="average EEG trial files per subject")
    p.add_argument("--dir", help="trial directory (default: $MVLOGIT_DATA_DIR)")
    p.add_argument("--condition", choices=CONDITIONS + ("all",), default="single")
    p.set_defaults(func=_cmd_ingest_eeg)

    p = sub.add_parser("glram", parents=[common], help="fit shared low-rank bases")
    p.add_argument("--data", required=True)
    p.add_argument("--p0", type=int, required=True)
    p.add_argument("--q0", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=_cmd_glram)

    p = sub.add_parser("fit", parents=[common], help="fit the bilinear model")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--penalty", choices=("all-theta", "no-intercept"), default="no-intercept")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--baseline-row", type=int, default=None)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--trace-csv", help="write per-iteration penalized log-likelihood CSV")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("cv", parents=[common], help="select lambda by cross-validated accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", required=True, help="comma-separated lambda values")
    p.add_argument("--scheme", default="loo", help="'loo' or a fold count")
    p.add_argument("--model", choices=("bilinear", "conventional"), default="bilinear")
    p.add_argument("--penalty", choices=("all-theta", "no-intercept"), default="no-intercept")
    p.add_argument("--baseline-row", type=int, default=None)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("infer", parents=[common], help="coefficient SEs and confidence intervals")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--subject-probabilities", action="store_true")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("predict", parents=[common], help="per-subject predictions with intervals")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--no-interval", action="store_true")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("simulate", parents=[common], help="run a Monte-Carlo study cell")
    p.add_argument("--design", required=True, help="design JSON path")
    p.add_argument("--replicates", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("eeg-pipeline", parents=[common],
                       help="project, standardize, tune and evaluate both arms")
    p.add_argument("--data", required=True)
    p.add_argument("--p0", type=int, required=True)
    p.add_argument("--q0", type=int, required=True)
    p.add_argument("--grid", default="0.5,1,2,4,8,16,24,32,64")
    p.add_argument("--scheme", default="loo")
    p.add_argument("--penalty", choices=("all-theta", "no-intercept"), default="all-theta")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--nested", action="store_true")
    p.add_argument("--model-out", help="also save the fitted model artifact")
    p.set_defaults(func=_cmd_eeg_pipeline)

    p = sub.add_parser("pca-baseline", parents=[common],
                       help="PCA-scores arm fed to the conventional model")
    p.add_argument("--data", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--grid", default="0.5,1,2,4,8,16,24,32,64")
    p.add_argument("--scheme", default="loo")
    p.add_argument("--penalty", choices=("all-theta", "no-intercept"), default="no-intercept")
    p.set_defaults(func=_cmd_pca_baseline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "simulate" and args.seed is None:
        args.seed = 0
    try:
        args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
