import json

import numpy as np
import pytest

from mvlogit import (
    FitConfig,
    MatrixDataset,
    MultiClassDataset,
    ThetaParam,
    ValidationError,
    covariance_estimate,
    fit,
    glram_fit,
    standardize,
)
from mvlogit.serialize import (
    ModelArtifact,
    canonical_json,
    dataset_from_csv,
    dataset_from_dict,
    dataset_to_csv,
    dataset_to_dict,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)


@pytest.fixture
def dataset():
    rng = np.random.default_rng(0)
    return MatrixDataset(rng.standard_normal((12, 3, 4)), rng.integers(0, 2, 12))


class TestDatasetJson:
    def test_round_trip(self, dataset, tmp_path):
        path = tmp_path / "d.json"
        save_dataset(dataset, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.matrices, dataset.matrices)
        np.testing.assert_array_equal(back.labels, dataset.labels)

    def test_schema_keys(self, dataset):
        doc = dataset_to_dict(dataset)
        assert set(doc) == {"p", "q", "labels", "matrices"}
        assert doc["p"] == 3 and doc["q"] == 4
        # row-major rows: matrices[i][r] is row r of subject i
        assert len(doc["matrices"][0]) == 3
        assert len(doc["matrices"][0][0]) == 4

    def test_multiclass_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        data = MultiClassDataset(rng.standard_normal((6, 2, 2)), rng.integers(1, 4, 6), 3)
        path = tmp_path / "m.json"
        save_dataset(data, path)
        back = load_dataset(path)
        assert isinstance(back, MultiClassDataset)
        assert back.num_classes == 3

    def test_declared_dims_must_match(self):
        doc = {"p": 5, "q": 4, "labels": [0], "matrices": [[[0.0, 0.0], [0.0, 0.0]]]}
        with pytest.raises(ValidationError):
            dataset_from_dict(doc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_dataset(tmp_path / "nope.json")

    def test_canonical_json_is_stable(self, dataset):
        a = canonical_json(dataset_to_dict(dataset))
        b = canonical_json(dataset_to_dict(dataset))
        assert a == b
        assert json.loads(a)  # well-formed


class TestDatasetCsv:
    def test_round_trip_exact(self, dataset):
        text = dataset_to_csv(dataset)
        back = dataset_from_csv(text)
        np.testing.assert_array_equal(back.matrices, dataset.matrices)
        np.testing.assert_array_equal(back.labels, dataset.labels)

    def test_header_is_column_major(self, dataset):
        header = dataset_to_csv(dataset).splitlines()[0].split(",")
        assert header[0] == "y"
        assert header[1] == "x_1_1"
        assert header[2] == "x_2_1"  # row index varies fastest
        assert header[-1] == "x_3_4"

    def test_rejects_wrong_column_order(self):
        # row-major column order is not the declared interface
        text = "y,x_1_1,x_1_2,x_2_1,x_2_2\n1,0.0,0.0,0.0,0.0\n"
        with pytest.raises(ValidationError):
            dataset_from_csv(text)

    def test_reports_bad_line_number(self):
        text = "y,x_1_1,x_2_1\n1,0.0,0.0\n0,oops,0.0\n"
        with pytest.raises(ValidationError, match="line 3"):
            dataset_from_csv(text)


class TestModelJson:
    def test_round_trip_with_all_artifacts(self, dataset, tmp_path):
        std_data, stats = standardize(dataset)
        config = FitConfig(lam=1.5, penalty_kind="all-theta", baseline_row=0)
        result = fit(std_data, config)
        cov = covariance_estimate(result, std_data, config)
        bases = glram_fit(dataset.matrices, 2, 2)
        artifact = ModelArtifact(theta=result.theta, lam=1.5, penalty_kind="all-theta",
                                 standardization=stats, covariance=cov, glram=bases)
        path = tmp_path / "model.json"
        save_model(artifact, path)
        doc = json.loads(path.read_text())
        assert set(doc) >= {"gamma", "alpha", "beta", "baseline_row", "standardization", "lambda"}
        back = load_model(path)
        np.testing.assert_allclose(back.theta.free(), result.theta.free())
        assert back.theta.baseline_row == 0
        np.testing.assert_allclose(back.standardization.means, stats.means)
        np.testing.assert_allclose(back.covariance.sigma_hat, cov.sigma_hat)
        np.testing.assert_allclose(back.glram.A, bases.A)

    def test_minimal_model_document(self, tmp_path):
        doc = {
            "gamma": 0.5,
            "alpha": [1.0, -0.2],
            "beta": [0.3, 0.1, -0.4],
            "baseline_row": 0,
            "standardization": None,
            "lambda": 2.0,
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        art = load_model(path)
        assert art.theta.p == 2 and art.theta.q == 3
        assert art.lam == 2.0
        assert art.covariance is None and art.glram is None

    def test_malformed_model_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"gamma": 1.0}))
        with pytest.raises(ValidationError):
            load_model(path)
