import numpy as np
import pytest
from scipy.linalg import subspace_angles

from mvlogit import ValidationError, glram_fit, glram_project, reconstruction_error


def centered_energy(mats):
    xc = mats - mats.mean(axis=0)
    return float(np.sum(xc * xc))


class TestGlramFit:
    def test_full_bases_capture_everything(self):
        rng = np.random.default_rng(0)
        mats = rng.standard_normal((7, 4, 3))
        bases = glram_fit(mats, 4, 3)
        assert bases.objective_trace[-1] == pytest.approx(centered_energy(mats), rel=1e-10)
        assert reconstruction_error(bases, mats) == pytest.approx(0.0, abs=1e-8)

    def test_single_matrix_matches_svd_subspaces(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((9, 7))
        bases = glram_fit(x[None], 3, 3, tol=1e-14, max_iter=500, center=False)
        u, s, vt = np.linalg.svd(x)
        assert np.max(subspace_angles(bases.A, u[:, :3])) < 1e-6
        assert np.max(subspace_angles(bases.B, vt[:3].T)) < 1e-6
        assert bases.objective_trace[-1] == pytest.approx(np.sum(s[:3] ** 2), rel=1e-10)

    def test_orthonormal_and_monotone(self):
        rng = np.random.default_rng(2)
        mats = rng.standard_normal((15, 8, 6))
        bases = glram_fit(mats, 3, 2)
        np.testing.assert_allclose(bases.A.T @ bases.A, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(bases.B.T @ bases.B, np.eye(2), atol=1e-10)
        tr = np.array(bases.objective_trace)
        assert np.all(np.diff(tr) >= -1e-12 * np.maximum(1.0, np.abs(tr[:-1])))

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        mats = rng.standard_normal((10, 6, 5))
        b1 = glram_fit(mats, 2, 2)
        b2 = glram_fit(mats, 2, 2)
        np.testing.assert_array_equal(b1.A, b2.A)
        np.testing.assert_array_equal(b1.B, b2.B)

    def test_out_of_range_dims(self):
        mats = np.zeros((3, 4, 4))
        with pytest.raises(ValidationError):
            glram_fit(mats, 5, 2)
        with pytest.raises(ValidationError):
            glram_fit(mats, 2, 0)

    def test_non_finite_rejected(self):
        mats = np.zeros((2, 3, 3))
        mats[0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            glram_fit(mats, 2, 2)


class TestGlramProject:
    def test_identity_bases_return_centered_input(self):
        rng = np.random.default_rng(4)
        mats = rng.standard_normal((5, 3, 3))
        bases = glram_fit(mats, 3, 3)
        x = rng.standard_normal((3, 3))
        proj = glram_project(bases, x)
        recon = bases.A @ proj @ bases.B.T
        np.testing.assert_allclose(recon, x - bases.centering, atol=1e-10)

    def test_zero_matrix_projects_to_zero(self):
        rng = np.random.default_rng(5)
        mats = rng.standard_normal((6, 4, 3))
        bases = glram_fit(mats, 2, 2, center=False)
        np.testing.assert_allclose(glram_project(bases, np.zeros((4, 3))), 0.0, atol=1e-15)

    def test_rank_one_inside_the_span_is_reproduced(self):
        rng = np.random.default_rng(6)
        mats = rng.standard_normal((8, 5, 4))
        bases = glram_fit(mats, 3, 2, center=False)
        u = bases.A @ rng.standard_normal(3)
        v = bases.B @ rng.standard_normal(2)
        x = np.outer(u, v)
        recon = bases.A @ glram_project(bases, x) @ bases.B.T
        np.testing.assert_allclose(recon, x, atol=1e-10)

    def test_shape_mismatch(self):
        mats = np.random.default_rng(7).standard_normal((4, 5, 4))
        bases = glram_fit(mats, 2, 2)
        with pytest.raises(ValidationError):
            glram_project(bases, np.zeros((4, 5)))


class TestReconstructionError:
    def test_energy_identity(self):
        rng = np.random.default_rng(8)
        mats = rng.standard_normal((12, 7, 5))
        bases = glram_fit(mats, 3, 2)
        total = centered_energy(mats)
        gap = abs(bases.objective_trace[-1] + reconstruction_error(bases, mats) - total)
        assert gap / total < 1e-8

    def test_monotone_in_p0(self):
        rng = np.random.default_rng(9)
        mats = rng.standard_normal((10, 6, 4))
        errors = [reconstruction_error(glram_fit(mats, p0, 3), mats) for p0 in (1, 2, 4, 6)]
        assert np.all(np.diff(errors) <= 1e-8)

    def test_term_wise_oracle(self):
        rng = np.random.default_rng(10)
        mats = rng.standard_normal((6, 5, 4))
        bases = glram_fit(mats, 2, 2)
        direct = 0.0
        for x in mats:
            xc = x - bases.centering
            recon = bases.A @ (bases.A.T @ xc @ bases.B) @ bases.B.T
            direct += np.sum((xc - recon) ** 2)
        assert reconstruction_error(bases, mats) == pytest.approx(direct, rel=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(11)
        mats = rng.standard_normal((9, 6, 5))
        bases = glram_fit(mats, 3, 2)
        qmat, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        from mvlogit.glram import GlramBases

        rotated = GlramBases(A=bases.A @ qmat, B=bases.B, centering=bases.centering,
                             objective_trace=bases.objective_trace)
        assert reconstruction_error(rotated, mats) == pytest.approx(
            reconstruction_error(bases, mats), rel=1e-10)
