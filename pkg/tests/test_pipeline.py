import json

import numpy as np
import pytest

from mvlogit import (
    MatrixDataset,
    ModelArtifact,
    PipelineConfig,
    ValidationError,
    apply_preprocessing,
    eeg_pipeline,
    fit_conventional,
    pca_baseline,
    predict_with_model,
)
from mvlogit.eeg import synthetic_eeg_dataset
from mvlogit.serialize import load_model, save_model


@pytest.fixture(scope="module")
def eeg_like():
    return synthetic_eeg_dataset(n_subjects=16, p=48, q=12, seed=3)


@pytest.fixture(scope="module")
def pipeline_run(eeg_like):
    config = PipelineConfig(p0=4, q0=4, lambda_grid=(1.0, 8.0), scheme="loo")
    return eeg_pipeline(eeg_like, config)


class TestEegPipeline:
    def test_report_schema(self, pipeline_run):
        report = pipeline_run.report
        required = {
            "config", "n_subjects", "baseline_row", "lambda_mv", "lambda_conventional",
            "loo_accuracy_mv", "loo_accuracy_conventional", "lambda_table_mv",
            "lambda_table_conventional", "coefficients", "subject_probabilities",
        }
        assert required <= set(report)
        assert 0.0 <= report["loo_accuracy_mv"] <= 1.0
        coef = report["coefficients"]
        assert len(coef["alpha"]) == 4 and len(coef["beta"]) == 4
        assert coef["alpha"][coef["baseline_row"]] == 1.0
        assert coef["alpha_ci"][coef["baseline_row"]] is None

    def test_subject_probability_bands(self, pipeline_run, eeg_like):
        rows = pipeline_run.report["subject_probabilities"]
        assert len(rows) == eeg_like.n
        for row in rows:
            assert 0.0 <= row["lower"] <= row["probability"] <= row["upper"] <= 1.0

    def test_bilinear_arm_beats_conventional_on_planted_signal(self, pipeline_run):
        report = pipeline_run.report
        assert report["loo_accuracy_mv"] >= report["loo_accuracy_conventional"]
        assert report["loo_accuracy_mv"] >= 0.8

    def test_artifact_predicts_raw_matrices(self, pipeline_run, eeg_like, tmp_path):
        save_model(pipeline_run.artifact, tmp_path / "m.json")
        artifact = load_model(tmp_path / "m.json")
        rows = predict_with_model(artifact, eeg_like.matrices, level=0.95)
        acc = np.mean([r["label"] == y for r, y in zip(rows, eeg_like.labels)])
        assert acc >= 0.8
        for row in rows:
            assert 0.0 <= row["lower"] <= row["probability"] <= row["upper"] <= 1.0

    def test_deterministic_report(self, eeg_like):
        config = PipelineConfig(p0=3, q0=3, lambda_grid=(2.0, 16.0))
        a = eeg_pipeline(eeg_like, config).report
        b = eeg_pipeline(eeg_like, config).report
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_nested_variant_runs(self, eeg_like):
        config = PipelineConfig(p0=3, q0=3, lambda_grid=(4.0,), nested=True)
        report = eeg_pipeline(eeg_like, config).report
        assert report["config"]["nested"] is True
        assert 0.0 <= report["loo_accuracy_mv"] <= 1.0


class TestPcaBaseline:
    def test_rank_out_of_range(self, eeg_like):
        with pytest.raises(ValidationError):
            pca_baseline(eeg_like, eeg_like.n, (1.0,))

    def test_unpenalized_full_rank_matches_conventional_loglik(self):
        # with lam=0 an invertible rotation of the features leaves the
        # fitted likelihood unchanged, so full-rank PCA scores and raw
        # vec(X) features reach the same optimum
        rng = np.random.default_rng(1)
        data = MatrixDataset(rng.standard_normal((30, 2, 2)), rng.integers(0, 2, 30))
        flat = data.matrices.transpose(0, 2, 1).reshape(30, -1)
        centered = flat - flat.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        scores = centered @ vt.T
        raw = fit_conventional(MatrixDataset(centered.reshape(30, 4, 1)[:, :, :],
                                             data.labels), 0.0)
        rotated = fit_conventional(MatrixDataset(scores.reshape(30, 4, 1), data.labels), 0.0)
        assert raw.loglik == pytest.approx(rotated.loglik, abs=1e-6)

    def test_planted_rank_one_signal_recovered_at_small_r(self, eeg_like):
        res = pca_baseline(eeg_like, 3, (0.5, 4.0))
        assert res.accuracy >= 0.75
        assert res.r == 3
        assert dict(res.table)[res.selected_lambda] == res.accuracy


class TestApplyPreprocessing:
    def test_requires_bridge_when_shapes_differ(self, pipeline_run):
        artifact = pipeline_run.artifact
        stripped = ModelArtifact(theta=artifact.theta, lam=artifact.lam,
                                 penalty_kind=artifact.penalty_kind)
        with pytest.raises(ValidationError, match="preprocessing"):
            apply_preprocessing(stripped, np.zeros((2, 48, 12)))

    def test_already_projected_data_passes_through_standardization(self, pipeline_run):
        artifact = pipeline_run.artifact
        x = np.zeros((1, 4, 4))
        out = apply_preprocessing(artifact, x)
        np.testing.assert_allclose(
            out[0], artifact.standardization.apply(x[0][None])[0], atol=1e-12)

    def test_single_matrix_promoted_to_stack(self, pipeline_run, eeg_like):
        out = apply_preprocessing(pipeline_run.artifact, eeg_like.matrices[0])
        assert out.shape == (1, 4, 4)
