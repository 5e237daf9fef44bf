import math

import numpy as np
import pytest
from scipy import stats

from snntmvn.censored import (
    CensoredDataset,
    build_censored_problem,
    krige_predict,
    left_censor,
    sample_censored_posterior,
)
from snntmvn.engine import TruncationProblem, precompute, sample
from snntmvn.kernels import CovarianceModel, KernelCovariance, LocationSet, covariance_block
from snntmvn.rng import substream


def analytic_conditional(cov, obs_idx, cen_idx, obs_values):
    """Dense conditional mean/cov of cen given obs (independent oracle)."""
    s_oo = cov[np.ix_(obs_idx, obs_idx)]
    s_oc = cov[np.ix_(obs_idx, cen_idx)]
    s_cc = cov[np.ix_(cen_idx, cen_idx)]
    w = np.linalg.solve(s_oo, s_oc)
    mu = w.T @ obs_values
    sig = s_cc - s_oc.T @ w
    return mu, 0.5 * (sig + sig.T)


class TestDatasetValidation:
    def test_observed_must_have_value(self):
        locs = LocationSet(np.zeros((2, 1)))
        with pytest.raises(ValueError):
            CensoredDataset(locs, np.array([np.nan, 1.0]), np.array([False, False]),
                            np.full(2, -np.inf), np.full(2, np.inf))

    def test_censored_needs_proper_interval(self):
        locs = LocationSet(np.zeros((2, 1)))
        with pytest.raises(ValueError):
            CensoredDataset(locs, np.array([np.nan, 1.0]), np.array([True, False]),
                            np.array([2.0, -np.inf]), np.array([1.0, np.inf]))

    def test_left_censor_counts(self):
        locs = LocationSet(np.arange(5, dtype=float)[:, None])
        field = np.array([-1.0, 2.0, 0.5, 3.0, 0.9])
        data = left_censor(locs, field, 1.0)
        assert data.n_censored == 3
        assert data.n_observed == 2
        np.testing.assert_array_equal(data.censored_idx, [0, 2, 4])


class TestBuildProblem:
    def test_requires_censored_sites(self):
        locs = LocationSet(np.arange(3, dtype=float)[:, None])
        data = left_censor(locs, np.array([2.0, 3.0, 4.0]), 1.0)
        model = CovarianceModel(1.0, 1.0)
        with pytest.raises(ValueError):
            build_censored_problem(data, model, m=2)

    def test_observed_come_first_in_ordering(self):
        rng = np.random.default_rng(0)
        locs = LocationSet(rng.random((30, 2)))
        field = rng.standard_normal(30)
        data = left_censor(locs, field, 0.0)
        model = CovarianceModel(1.0, 0.3, 1.5, nugget=1e-8)
        plan = build_censored_problem(data, model, m=5)
        n_obs = data.n_observed
        assert np.all(~data.censored[plan.ordering.permutation[:n_obs]])
        assert np.all(data.censored[plan.ordering.permutation[n_obs:]])
        assert np.all(plan.fixed_mask[:n_obs])
        assert not np.any(plan.fixed_mask[n_obs:])

    def test_no_observed_reduces_to_plain_tmvn(self):
        rng = np.random.default_rng(1)
        locs = LocationSet(rng.random((12, 2)))
        model = CovarianceModel(1.0, 0.3, 1.5, nugget=1e-8)
        field = np.full(12, -1.0)
        data = left_censor(locs, field, 1.5)  # everything censored below 1.5
        plan = build_censored_problem(data, model, m=4, ordering_kind="coordinate", seed=3)
        ens = sample_censored_posterior(plan, data, 20, seed=7)

        prob = TruncationProblem(np.full(12, -np.inf), np.full(12, 1.5),
                                 KernelCovariance(model, locs), locs)
        plain = sample(precompute(prob, m=4, ordering_kind="coordinate", seed=3), 20, seed=7)
        np.testing.assert_array_equal(ens.samples, plain.samples)


class TestPosteriorSampling:
    def test_single_censored_site_matches_analytic_conditional(self):
        # all observed except one left-censored site: the posterior there is
        # a univariate truncated conditional normal with known moments
        rng = np.random.default_rng(2)
        locs = LocationSet(rng.random((12, 2)))
        model = CovarianceModel(1.0, 0.4, 1.5, nugget=1e-6)
        cov = covariance_block(model, locs, np.arange(12), np.arange(12))
        field = np.linalg.cholesky(cov) @ rng.standard_normal(12)
        target_site = int(np.argmin(field))
        threshold = field[target_site] + 1e-6
        data = left_censor(locs, field, threshold)
        assert data.n_censored == 1

        plan = build_censored_problem(data, model, m=12)
        ens = sample_censored_posterior(plan, data, 40_000, seed=8)
        draws = ens.samples[:, 0]

        obs = data.observed_idx
        mu, sig = analytic_conditional(cov, obs, np.array([target_site]), field[obs])
        a, b = -np.inf, (threshold - mu[0]) / math.sqrt(sig[0, 0])
        want = stats.truncnorm(a, b, loc=mu[0], scale=math.sqrt(sig[0, 0]))
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - want.mean()) < 4 * se
        se_var = draws.var() * math.sqrt(2 / (draws.size - 1))
        assert abs(draws.var() - want.var()) < 4 * se_var

    def test_every_draw_respects_detection_limits(self):
        rng = np.random.default_rng(3)
        locs = LocationSet(rng.random((40, 2)))
        model = CovarianceModel(1.0, 0.2, 1.5, nugget=1e-8)
        cov = covariance_block(model, locs, np.arange(40), np.arange(40))
        field = np.linalg.cholesky(cov) @ rng.standard_normal(40)
        data = left_censor(locs, field, 0.4)
        plan = build_censored_problem(data, model, m=10)
        ens = sample_censored_posterior(plan, data, 60, seed=9)
        assert np.all(ens.samples <= 0.4)

    def test_full_field_echoes_observed(self):
        rng = np.random.default_rng(4)
        locs = LocationSet(rng.random((20, 2)))
        model = CovarianceModel(1.0, 0.2, 1.5, nugget=1e-8)
        field = rng.standard_normal(20)
        data = left_censor(locs, field, 0.0)
        plan = build_censored_problem(data, model, m=6)
        ens = sample_censored_posterior(plan, data, 5, seed=10, full_field=True)
        obs = data.observed_idx
        for k in range(5):
            np.testing.assert_allclose(ens.samples[k, obs], field[obs], atol=0)

    def test_equality_as_interval_limit(self):
        # conditioning on an exact value == conditioning on a vanishing
        # interval around it, up to Monte Carlo error
        rng = np.random.default_rng(5)
        n = 8
        locs = LocationSet(rng.random((n, 2)))
        model = CovarianceModel(1.0, 0.4, 1.5, nugget=1e-6)
        cov = covariance_block(model, locs, np.arange(n), np.arange(n))
        field = np.linalg.cholesky(cov) @ rng.standard_normal(n)
        data = left_censor(locs, field, np.sort(field)[n // 2])
        obs = data.observed_idx

        plan = build_censored_problem(data, model, m=n)
        ens = sample_censored_posterior(plan, data, 4000, seed=11)

        eps = 1e-6
        lower = np.where(data.censored, -np.inf, field - eps)
        upper = np.where(data.censored, data.upper, field + eps)
        prob = TruncationProblem(lower, upper, KernelCovariance(model, locs), locs)
        given = np.concatenate([obs, data.censored_idx])
        narrow = sample(precompute(prob, m=n, ordering_kind="given", given_order=given),
                        4000, seed=12)
        narrow_cens = narrow.samples[:, data.censored_idx]
        se = np.sqrt(ens.samples.var(0) / 4000 + narrow_cens.var(0) / 4000)
        assert np.all(np.abs(ens.samples.mean(0) - narrow_cens.mean(0)) < 4 * se + 1e-9)


class TestKriging:
    @staticmethod
    def _simple_setup(nugget=0.0):
        locs = LocationSet(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]))
        model = CovarianceModel(1.0, 0.5, 1.5, nugget=nugget)
        field = np.array([0.5, -0.2, 0.3, 2.0])
        data = left_censor(locs, field, 1.0)  # site 3 observed, others censored
        return locs, model, field, data

    def test_coincident_grid_point_reproduces_observation(self):
        locs, model, field, data = self._simple_setup(nugget=0.0)
        plan = build_censored_problem(data, model, m=4)
        ens = sample_censored_posterior(plan, data, 30, seed=13)
        grid = LocationSet(np.array([[2.0, 2.0]]))
        mean, sd = krige_predict(data, ens, model, grid, m=4)
        assert mean[0] == pytest.approx(2.0, abs=1e-8)
        assert sd[0] == pytest.approx(0.0, abs=1e-6)

    def test_far_point_reverts_to_prior(self):
        locs, model, field, data = self._simple_setup(nugget=0.0)
        plan = build_censored_problem(data, model, m=4)
        ens = sample_censored_posterior(plan, data, 30, seed=14)
        grid = LocationSet(np.array([[80.0, 80.0]]))
        mean, sd = krige_predict(data, ens, model, grid, m=4)
        assert mean[0] == pytest.approx(0.0, abs=1e-6)
        assert sd[0] == pytest.approx(1.0, abs=1e-6)  # prior sd

    def test_three_point_line_matches_dense_conditional(self):
        locs = LocationSet(np.array([[0.0], [1.0], [2.0]]))
        model = CovarianceModel(1.3, 0.8, 1.5, nugget=0.0)
        values = np.array([1.2, 2.0, 1.5])
        data = CensoredDataset(locs, values, np.zeros(3, dtype=bool),
                               np.full(3, -np.inf), np.full(3, np.inf))
        cov = covariance_block(model, locs, np.arange(3), np.arange(3))
        grid_pts = np.array([[0.5], [1.7]])
        k_gn = np.array([
            [covariance_block(model, LocationSet(np.vstack([g, locs.points[j]])), [0], [1])[0, 0]
             for j in range(3)] for g in grid_pts
        ])
        want = k_gn @ np.linalg.solve(cov, values)

        from snntmvn.engine import SampleEnsemble
        ens = SampleEnsemble(samples=np.zeros((1, 0)), seed=0, indices=np.array([], dtype=int))
        mean, _ = krige_predict(data, ens, model, LocationSet(grid_pts), m=3)
        np.testing.assert_allclose(mean, want, atol=1e-8)

    def test_mean_is_linear_in_conditioned_values(self):
        rng = np.random.default_rng(6)
        locs = LocationSet(rng.random((10, 2)))
        model = CovarianceModel(1.0, 0.4, 1.5, nugget=1e-6)
        grid = LocationSet(rng.random((5, 2)))

        from snntmvn.engine import SampleEnsemble

        def krige_of(vals):
            data = CensoredDataset(locs, vals, np.zeros(10, dtype=bool),
                                   np.full(10, -np.inf), np.full(10, np.inf))
            ens = SampleEnsemble(samples=np.zeros((1, 0)), seed=0, indices=np.array([], dtype=int))
            return krige_predict(data, ens, model, grid, m=10)[0]

        v1 = rng.standard_normal(10)
        v2 = rng.standard_normal(10)
        lhs = krige_of(2.0 * v1 + 3.0 * v2)
        rhs = 2.0 * krige_of(v1) + 3.0 * krige_of(v2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_grid_dimension_mismatch(self):
        locs, model, field, data = self._simple_setup()
        plan = build_censored_problem(data, model, m=4)
        ens = sample_censored_posterior(plan, data, 3, seed=15)
        with pytest.raises(ValueError):
            krige_predict(data, ens, model, LocationSet(np.zeros((2, 3))), m=4)
