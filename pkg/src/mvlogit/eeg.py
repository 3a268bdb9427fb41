"""Ingestion of UCI-style EEG trial files and synthetic stand-ins.

Each trial file holds '#'-prefixed metadata headers followed by
whitespace-delimited voltage rows.  The parser accepts the two row
layouts seen across dumps of the archive: ``trial channel sample value``
and ``channel sample value``.  Headers supply the subject id, the
condition tag ("S1 obj" single stimulus, "S2 match", "S2 nomatch"),
the trial number, the declared (samples, channels) shape, and the
channel order.  Incomplete trials are rejected with the offending trial
named; subjects are labelled from the fourth character of their id
('a' alcoholic -> 1, 'c' control -> 0).

The synthetic generators produce deterministic EEG-shaped data (and
trial files in the same format) for tests and for exercising the
pipeline when the real archive is not available.
"""

from __future__ import annotations

import gzip
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import MatrixDataset

__all__ = [
    "EegTrialRecord",
    "parse_trial_file",
    "load_trials",
    "ingest_eeg",
    "synthetic_eeg_dataset",
    "write_synthetic_trials",
]

logger = logging.getLogger(__name__)

CONDITIONS = ("single", "matched", "unmatched")
_CONDITION_TAGS = {
    "S1 obj": "single",
    "S2 match": "matched",
    "S2 nomatch": "unmatched",
    "S2 no match": "unmatched",
}
_SUBJECT_GROUP = re.compile(r"^co\d([ac])")
_DIMS = re.compile(r"(\d+)\s+chans,\s*(\d+)\s+samples")
_TRIAL_NO = re.compile(r",\s*trial\s+(\d+)")
_CHAN_HEADER = re.compile(r"^#\s*(\S+)\s+chan\s+(\d+)\s*$")


@dataclass(frozen=True)
class EegTrialRecord:
    """One complete trial: a (samples x channels) voltage matrix."""

    subject_id: str
    group: str  # "alcoholic" | "control"
    trial_number: int
    condition: str  # "single" | "matched" | "unmatched"
    matrix: np.ndarray
    channel_names: tuple[str, ...]

    @property
    def label(self) -> int:
        return 1 if self.group == "alcoholic" else 0


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt")
    return open(path, "r")


def parse_trial_file(path) -> EegTrialRecord:
    """Parse one trial file, validating completeness against its header."""
    path = Path(path)
    subject_id = None
    condition = None
    trial_number = None
    n_chans = None
    n_samples = None
    channel_order: dict[str, int] = {}
    values: dict[tuple[int, int], float] = {}

    try:
        with _open_text(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ValidationError(f"cannot read trial file {path}: {exc}") from exc

    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if subject_id is None and body:
                subject_id = body.split()[0].split(".")[0]
                continue
            m = _DIMS.search(body)
            if m:
                n_chans, n_samples = int(m.group(1)), int(m.group(2))
                continue
            for tag, cond in _CONDITION_TAGS.items():
                if body.startswith(tag):
                    condition = cond
                    m = _TRIAL_NO.search(body)
                    if m:
                        trial_number = int(m.group(1))
                    break
            else:
                m = _CHAN_HEADER.match(line)
                if m:
                    name = m.group(1)
                    if name not in channel_order:
                        channel_order[name] = len(channel_order)
            continue
        fields = line.split()
        if len(fields) == 4:
            _, chan, sample, value = fields
        elif len(fields) == 3:
            chan, sample, value = fields
        else:
            raise ValidationError(f"{path} line {lineno}: malformed data row {line!r}")
        try:
            sample_i = int(sample)
            value_f = float(value)
        except ValueError:
            raise ValidationError(f"{path} line {lineno}: malformed data row {line!r}") from None
        if chan not in channel_order:
            channel_order[chan] = len(channel_order)
        values[(sample_i, channel_order[chan])] = value_f

    if subject_id is None:
        raise ValidationError(f"{path}: no subject header found")
    if condition is None:
        raise ValidationError(f"{path}: no condition header found")
    m = _SUBJECT_GROUP.match(subject_id)
    if not m:
        raise ValidationError(f"{path}: cannot decode group from subject id {subject_id!r}")
    group = "alcoholic" if m.group(1) == "a" else "control"

    if n_chans is None:
        n_chans = len(channel_order)
    if n_samples is None:
        n_samples = 1 + max((s for s, _ in values), default=-1)
    if len(channel_order) != n_chans:
        raise ValidationError(
            f"{path}: trial {subject_id}/{trial_number} incomplete: "
            f"{len(channel_order)} channels seen, {n_chans} declared")

    matrix = np.full((n_samples, n_chans), np.nan)
    for (s, c), v in values.items():
        if not (0 <= s < n_samples and 0 <= c < n_chans):
            raise ValidationError(
                f"{path}: trial {subject_id}/{trial_number} has out-of-range sample/channel ({s}, {c})")
        matrix[s, c] = v
    if np.isnan(matrix).any():
        missing = int(np.isnan(matrix).sum())
        raise ValidationError(
            f"{path}: trial {subject_id}/{trial_number} incomplete: {missing} missing voltage values")

    names = tuple(sorted(channel_order, key=channel_order.get))
    return EegTrialRecord(
        subject_id=subject_id,
        group=group,
        trial_number=trial_number if trial_number is not None else -1,
        condition=condition,
        matrix=matrix,
        channel_names=names,
    )


def _trial_paths(directory: Path) -> list[Path]:
    paths = [p for p in sorted(directory.rglob("*")) if p.is_file()]
    return [p for p in paths if not p.name.startswith(".")]


def load_trials(directory, condition: str = "single") -> list[EegTrialRecord]:
    """Parse every trial file under ``directory`` and filter by condition."""
    if condition not in CONDITIONS + ("all",):
        raise ValidationError(f"condition must be one of {CONDITIONS + ('all',)}")
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"not a directory: {directory}")
    paths = _trial_paths(directory)
    if not paths:
        raise ValidationError(f"no trial files under {directory}")
    records = [parse_trial_file(p) for p in paths]
    if condition != "all":
        records = [r for r in records if r.condition == condition]
    return records


def ingest_eeg(directory, condition: str = "single") -> MatrixDataset:
    """Average each subject's retained trials into one covariate matrix.

    Subjects are ordered by id; a subject present in the directory whose
    trials are all filtered out or rejected raises, rather than silently
    dropping the subject.
    """
    directory = Path(directory)
    all_records = load_trials(directory, "all")
    wanted = [r for r in all_records if condition in ("all", r.condition)]
    subjects_seen = sorted({r.subject_id for r in all_records})
    by_subject: dict[str, list[EegTrialRecord]] = {}
    for rec in wanted:
        by_subject.setdefault(rec.subject_id, []).append(rec)
    for sid in subjects_seen:
        if sid not in by_subject:
            raise ValidationError(f"subject {sid} has zero retained trials for condition {condition!r}")

    shapes = {rec.matrix.shape for rec in wanted}
    if len(shapes) != 1:
        raise ValidationError(f"trials disagree on matrix shape: {sorted(shapes)}")

    # normalize channel order to the first trial's list so columns line up
    canonical = wanted[0].channel_names
    canon_set = set(canonical)

    def aligned(rec: EegTrialRecord) -> np.ndarray:
        if rec.channel_names == canonical:
            return rec.matrix
        if set(rec.channel_names) != canon_set:
            raise ValidationError(
                f"trial {rec.subject_id}/{rec.trial_number} has channels "
                f"{sorted(set(rec.channel_names) ^ canon_set)} not matching the canonical list")
        order = [rec.channel_names.index(name) for name in canonical]
        return rec.matrix[:, order]

    mats, labels = [], []
    for sid in subjects_seen:
        recs = by_subject[sid]
        mats.append(np.mean([aligned(r) for r in recs], axis=0))
        labels.append(recs[0].label)
        logger.info("subject %s: %d trial(s), group %s", sid, len(recs), recs[0].group)
    logger.info("ingested %d subjects (%d alcoholic / %d control)",
                len(subjects_seen), int(np.sum(labels)), len(labels) - int(np.sum(labels)))
    return MatrixDataset(np.array(mats), np.array(labels))


def synthetic_eeg_dataset(n_subjects: int = 24, p: int = 256, q: int = 64,
                          seed: int = 0) -> MatrixDataset:
    """Deterministic EEG-shaped data with a planted low-rank group effect.

    Half the subjects carry a smooth time-by-channel bump on top of
    correlated noise, mimicking the averaged-trial matrices the real
    archive yields.  Intended for pipeline tests, not for science.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(p)
    c = np.arange(q)
    u = np.exp(-0.5 * ((t - p * 0.2) / (p * 0.08)) ** 2)
    v = np.sin(2.0 * np.pi * c / max(q, 2)) + 0.5
    pattern = np.outer(u, v)
    pattern /= np.linalg.norm(pattern)
    labels = np.arange(n_subjects) % 2
    drift = np.outer(np.sin(2.0 * np.pi * t / p), np.ones(q))  # shared slow wave
    mats = []
    for y in labels:
        noise = rng.standard_normal((p, q))
        mats.append(noise + 0.6 * drift + (8.0 if y else -8.0) * pattern)
    return MatrixDataset(np.array(mats), labels)


def write_synthetic_trials(directory, n_subjects: int = 4, trials_per_subject: int = 3,
                           p: int = 16, q: int = 8, seed: int = 0,
                           condition: str = "single") -> list[Path]:
    """Write small UCI-format trial files for parser and CLI tests."""
    tag = {v: k for k, v in _CONDITION_TAGS.items() if k != "S2 no match"}[condition]
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    channels = [f"CH{j}" for j in range(q)]
    paths = []
    for s in range(n_subjects):
        kind = "a" if s % 2 == 0 else "c"
        sid = f"co2{kind}{s:07d}"
        for trial in range(trials_per_subject):
            mat = rng.standard_normal((p, q)) + (1.0 if kind == "a" else -1.0)
            path = directory / f"{sid}.rd.{trial:03d}"
            with open(path, "w") as fh:
                fh.write(f"# {sid}.rd\n")
                fh.write(f"# 120 trials, {q} chans, {p} samples\n")
                fh.write("# 3.906000 msecs uV\n")
                fh.write(f"# {tag} , trial {trial}\n")
                for j, name in enumerate(channels):
                    fh.write(f"# {name} chan {j}\n")
                    for i in range(p):
                        fh.write(f"{trial} {name} {i} {mat[i, j]:.3f}\n")
            paths.append(path)
    return paths
