import numpy as np
import pytest
from scipy.special import expit, logit
from scipy.stats import norm

from mvlogit import (
    CovarianceEstimate,
    FitConfig,
    IntervalEstimate,
    MatrixDataset,
    ThetaParam,
    ValidationError,
    covariance_estimate,
    fisher_hessian,
    fit,
    probability_ci,
    theta_ci,
    working_covariates,
)
from mvlogit.solver import _predictors


def fitted_case(rng, p=4, q=3, n=120, lam=0.0, kind="no-intercept"):
    theta0 = ThetaParam.from_free(rng.normal(0, 0.4, p + q), p, q, 0)
    mats = rng.standard_normal((n, p, q))
    eta = theta0.gamma + np.einsum("npq,p,q->n", mats, theta0.alpha, theta0.beta)
    labels = (rng.random(n) < expit(eta)).astype(int)
    data = MatrixDataset(mats, labels)
    config = FitConfig(lam=lam, penalty_kind=kind, baseline_row=0)
    return fit(data, config), data, config


class TestCovarianceEstimate:
    def test_lambda_zero_equals_inverse_information(self):
        rng = np.random.default_rng(0)
        res, data, config = fitted_case(rng, lam=0.0)
        cov = covariance_estimate(res, data, config)
        xw = working_covariates(res.theta, data)
        pi = expit(_predictors(res.theta, data))
        info = xw.T @ ((pi * (1 - pi))[:, None] * xw) / data.n
        np.testing.assert_allclose(cov.sigma_hat @ info, np.eye(info.shape[0]), atol=1e-10)

    def test_symmetric_psd(self):
        rng = np.random.default_rng(1)
        res, data, config = fitted_case(rng, lam=2.0, kind="all-theta")
        cov = covariance_estimate(res, data, config)
        np.testing.assert_allclose(cov.sigma_hat, cov.sigma_hat.T, atol=1e-10)
        assert np.linalg.eigvalsh(cov.sigma_hat).min() >= -1e-10

    def test_intercept_only_closed_form(self):
        # zero covariates reduce the model to a single binomial proportion
        rng = np.random.default_rng(2)
        n = 400
        labels = rng.integers(0, 2, n)
        data = MatrixDataset(np.zeros((n, 1, 1)), labels)
        config = FitConfig(lam=0.0, baseline_row=0)
        res = fit(data, config)
        cov = covariance_estimate(res, data, config)
        p_hat = labels.mean()
        expected = 1.0 / np.sqrt(n * p_hat * (1 - p_hat))
        assert cov.standard_errors()[0] == pytest.approx(expected, rel=1e-4)

    def test_validation_of_asymmetric_matrix(self):
        with pytest.raises(ValidationError):
            CovarianceEstimate(sigma_hat=np.array([[1.0, 0.5], [0.0, 1.0]]), n=10)


class TestThetaCi:
    def test_interval_widens_with_level(self):
        rng = np.random.default_rng(3)
        res, data, config = fitted_case(rng)
        cov = covariance_estimate(res, data, config)
        widths = []
        for level in (0.5, 0.9, 0.99, 0.999999):
            ci = theta_ci(res, cov, 0, level)
            widths.append(ci.upper - ci.lower)
        assert np.all(np.diff(widths) > 0)
        assert widths[-1] > 5 * widths[0]

    def test_zero_variance_coordinate_degenerates(self):
        rng = np.random.default_rng(4)
        res, data, config = fitted_case(rng)
        sigma = covariance_estimate(res, data, config).sigma_hat.copy()
        sigma[1, :] = 0.0
        sigma[:, 1] = 0.0
        cov = CovarianceEstimate(sigma_hat=sigma, n=data.n)
        ci = theta_ci(res, cov, 1, 0.95)
        assert ci.lower == ci.upper == res.theta.free()[1]

    def test_nesting(self):
        rng = np.random.default_rng(5)
        res, data, config = fitted_case(rng)
        cov = covariance_estimate(res, data, config)
        for idx in range(res.theta.free().size):
            c90 = theta_ci(res, cov, idx, 0.90)
            c95 = theta_ci(res, cov, idx, 0.95)
            c99 = theta_ci(res, cov, idx, 0.99)
            assert c99.lower <= c95.lower <= c90.lower
            assert c90.upper <= c95.upper <= c99.upper

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(6)
        res, data, config = fitted_case(rng, lam=1.0)
        cov = covariance_estimate(res, data, config)
        idx = 2
        ci = theta_ci(res, cov, idx, 0.95)
        z = norm.ppf(0.975)
        half = z * np.sqrt(cov.sigma_hat[idx, idx] / data.n)
        assert ci.lower == pytest.approx(res.theta.free()[idx] - half, rel=1e-12)
        assert ci.upper == pytest.approx(res.theta.free()[idx] + half, rel=1e-12)


class TestProbabilityCi:
    def test_zero_covariate_uses_intercept_variance_only(self):
        rng = np.random.default_rng(7)
        res, data, config = fitted_case(rng)
        cov = covariance_estimate(res, data, config)
        ci = probability_ci(res, cov, np.zeros((4, 3)), 0.95)
        z = norm.ppf(0.975)
        half = z * np.sqrt(cov.sigma_hat[0, 0] / data.n)
        assert logit(ci.upper) - logit(ci.lower) == pytest.approx(2 * half, rel=1e-10)

    def test_endpoints_inside_unit_interval_and_bracket_estimate(self):
        rng = np.random.default_rng(8)
        res, data, config = fitted_case(rng)
        cov = covariance_estimate(res, data, config)
        for _ in range(100):
            x = 3.0 * rng.standard_normal((4, 3))
            ci = probability_ci(res, cov, x, 0.95)
            pi = expit(res.theta.gamma + res.theta.alpha @ x @ res.theta.beta)
            assert 0.0 <= ci.lower <= pi <= ci.upper <= 1.0

    def test_logit_scale_width_identity(self):
        rng = np.random.default_rng(9)
        res, data, config = fitted_case(rng, lam=0.5)
        cov = covariance_estimate(res, data, config)
        x = rng.standard_normal((4, 3))
        level = 0.9
        ci = probability_ci(res, cov, x, level)
        theta = res.theta
        xvec = np.concatenate((
            [1.0],
            (x @ theta.beta)[np.arange(theta.p) != theta.baseline_row],
            x.T @ theta.alpha,
        ))
        sd = np.sqrt(xvec @ cov.sigma_hat @ xvec)
        z = norm.ppf(0.5 + level / 2)
        assert logit(ci.upper) - logit(ci.lower) == pytest.approx(
            2 * z * sd / np.sqrt(data.n), rel=1e-10)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(10)
        res, data, config = fitted_case(rng)
        cov = covariance_estimate(res, data, config)
        with pytest.raises(ValidationError):
            probability_ci(res, cov, np.zeros((3, 4)), 0.95)


class TestIntervalEstimate:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValidationError):
            IntervalEstimate(lower=1.0, upper=0.0, level=0.95)

    def test_rejects_bad_level(self):
        with pytest.raises(ValidationError):
            IntervalEstimate(lower=0.0, upper=1.0, level=1.5)
