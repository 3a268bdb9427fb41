import gzip

import numpy as np
import pytest

from mvlogit import ValidationError
from mvlogit.eeg import (
    ingest_eeg,
    load_trials,
    parse_trial_file,
    synthetic_eeg_dataset,
    write_synthetic_trials,
)


def write_trial(path, subject="co2a0000001", condition="S1 obj", trial=0,
                channels=("FP1", "FP2"), samples=4, values=None, four_field=True):
    lines = [f"# {subject}.rd",
             f"# 120 trials, {len(channels)} chans, {samples} samples",
             "# 3.906000 msecs uV",
             f"# {condition} , trial {trial}"]
    for j, name in enumerate(channels):
        lines.append(f"# {name} chan {j}")
        for i in range(samples):
            v = values[i][j] if values is not None else float(i + 10 * j)
            if four_field:
                lines.append(f"{trial} {name} {i} {v}")
            else:
                lines.append(f"{name} {i} {v}")
    path.write_text("\n".join(lines) + "\n")
    return path


class TestParseTrialFile:
    def test_reads_metadata_and_matrix(self, tmp_path):
        path = write_trial(tmp_path / "co2a0000001.rd.000")
        rec = parse_trial_file(path)
        assert rec.subject_id == "co2a0000001"
        assert rec.group == "alcoholic"
        assert rec.condition == "single"
        assert rec.trial_number == 0
        assert rec.matrix.shape == (4, 2)
        assert rec.channel_names == ("FP1", "FP2")
        assert rec.matrix[2, 1] == pytest.approx(12.0)

    def test_three_field_rows_accepted(self, tmp_path):
        path = write_trial(tmp_path / "co2c0000002.rd.000", subject="co2c0000002",
                           four_field=False)
        rec = parse_trial_file(path)
        assert rec.group == "control"
        assert rec.label == 0

    def test_gzip_transparent(self, tmp_path):
        plain = write_trial(tmp_path / "t.rd", subject="co2a0000003")
        gz = tmp_path / "co2a0000003.rd.gz"
        gz.write_bytes(gzip.compress(plain.read_bytes()))
        rec = parse_trial_file(gz)
        assert rec.subject_id == "co2a0000003"

    def test_truncated_trial_rejected_with_name(self, tmp_path):
        path = write_trial(tmp_path / "bad.rd", subject="co2a0000009")
        text = path.read_text().splitlines()
        path.write_text("\n".join(text[:-2]) + "\n")  # drop the last two voltage rows
        with pytest.raises(ValidationError, match="co2a0000009.*incomplete"):
            parse_trial_file(path)

    def test_malformed_row_reports_line_number(self, tmp_path):
        path = tmp_path / "m.rd"
        path.write_text("# co2a0000004.rd\n# S1 obj , trial 0\n0 FP1 zero 1.5 extra junk\n")
        with pytest.raises(ValidationError, match="line 3"):
            parse_trial_file(path)

    def test_undecodable_subject_group(self, tmp_path):
        path = write_trial(tmp_path / "x.rd", subject="subject42")
        with pytest.raises(ValidationError, match="group"):
            parse_trial_file(path)

    def test_condition_variants(self, tmp_path):
        for tag, expected in (("S2 match", "matched"), ("S2 nomatch", "unmatched")):
            path = write_trial(tmp_path / f"{tag.replace(' ', '')}.rd",
                               subject="co2a0000005", condition=tag)
            assert parse_trial_file(path).condition == expected


class TestIngest:
    def test_average_of_two_trials(self, tmp_path):
        m = np.arange(8, dtype=float).reshape(4, 2)
        write_trial(tmp_path / "a0.rd", subject="co2a0000001", trial=0, values=m)
        write_trial(tmp_path / "a1.rd", subject="co2a0000001", trial=1, values=3 * m)
        data = ingest_eeg(tmp_path)
        assert data.n == 1
        np.testing.assert_allclose(data.matrices[0], 2 * m)

    def test_condition_filter_and_labels(self, tmp_path):
        write_synthetic_trials(tmp_path, n_subjects=4, trials_per_subject=2, p=6, q=3, seed=0)
        data = ingest_eeg(tmp_path, condition="single")
        assert data.n == 4
        assert sorted(data.labels.tolist()) == [0, 0, 1, 1]

    def test_subject_with_no_retained_trials(self, tmp_path):
        write_trial(tmp_path / "a.rd", subject="co2a0000001", condition="S1 obj")
        write_trial(tmp_path / "b.rd", subject="co2c0000002", condition="S2 match")
        with pytest.raises(ValidationError, match="co2c0000002"):
            ingest_eeg(tmp_path, condition="single")

    def test_channel_order_normalized(self, tmp_path):
        m = np.arange(8, dtype=float).reshape(4, 2)
        write_trial(tmp_path / "a0.rd", subject="co2a0000001", trial=0,
                    channels=("FP1", "FP2"), values=m)
        write_trial(tmp_path / "a1.rd", subject="co2a0000001", trial=1,
                    channels=("FP2", "FP1"), values=m[:, ::-1])  # same data, swapped columns
        data = ingest_eeg(tmp_path)
        np.testing.assert_allclose(data.matrices[0], m)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(ValidationError):
            load_trials(tmp_path)


class TestSyntheticDataset:
    def test_deterministic(self):
        a = synthetic_eeg_dataset(n_subjects=6, p=32, q=8, seed=5)
        b = synthetic_eeg_dataset(n_subjects=6, p=32, q=8, seed=5)
        np.testing.assert_array_equal(a.matrices, b.matrices)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_shape_and_balance(self):
        data = synthetic_eeg_dataset(n_subjects=10, p=16, q=4, seed=1)
        assert (data.n, data.p, data.q) == (10, 16, 4)
        assert data.labels.sum() == 5
