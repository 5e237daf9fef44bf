import numpy as np
import pytest
from scipy import stats

from snntmvn.engine import (
    SnnPlan,
    TruncationProblem,
    marginal_keep_first,
    precompute,
    sample,
)
from snntmvn.gaussian import FactorizationError
from snntmvn.kernels import CovarianceModel, KernelCovariance, LocationSet, MatrixCovariance
from snntmvn.lowdim import LowDimTarget, sample_rejection_oracle
from snntmvn.rng import substream


def random_spd(rng, q, scale=0.5):
    a = rng.standard_normal((q, q)) * scale
    return a @ a.T + np.eye(q)


def grid_locations(side, spacing=None):
    xs = np.arange(side) * (spacing if spacing else 1.0 / max(side - 1, 1))
    return LocationSet(np.array([(x, y) for x in xs for y in xs]))


class TestMarginalKeepFirst:
    def test_takes_first_entry(self):
        assert marginal_keep_first(np.array([3.2, -1.0, 0.0])) == 3.2

    def test_singleton(self):
        assert marginal_keep_first(np.array([7.0])) == 7.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            marginal_keep_first(np.array([]))


class TestProblemValidation:
    def test_rejects_equality_bounds(self):
        cov = MatrixCovariance(np.eye(2))
        with pytest.raises(ValueError):
            TruncationProblem([0.0, 1.0], [1.0, 1.0], cov)

    def test_rejects_length_mismatch(self):
        cov = MatrixCovariance(np.eye(2))
        with pytest.raises(ValueError):
            TruncationProblem([0.0], [1.0], cov)


class TestPrecompute:
    def test_single_coordinate(self):
        prob = TruncationProblem([-1.0], [1.0], MatrixCovariance(np.array([[2.0]])))
        plan = precompute(prob, m=1)
        f = plan.factors[0]
        assert f.coeff.shape == (1, 0)
        assert f.cond_cov[0, 0] == 2.0

    def test_full_conditioning_first_factor_is_whole_cov(self):
        rng = np.random.default_rng(0)
        cov = random_spd(rng, 4)
        prob = TruncationProblem(np.full(4, -1.0), np.full(4, 1.0), MatrixCovariance(cov))
        plan = precompute(prob, m=4)
        np.testing.assert_array_equal(plan.plan.later[0], np.arange(4))
        np.testing.assert_allclose(plan.factors[0].cond_cov, cov, atol=1e-12)

    def test_locations_required_for_partial_conditioning(self):
        prob = TruncationProblem(np.full(4, -1.0), np.full(4, 1.0), MatrixCovariance(np.eye(4)))
        with pytest.raises(ValueError):
            precompute(prob, m=2)

    def test_grid_factors_match_dense_oracle(self):
        locs = grid_locations(8)
        model = CovarianceModel(1.0, 0.15, 1.5, nugget=1e-6)
        cov_src = KernelCovariance(model, locs)
        n = 64
        prob = TruncationProblem(np.full(n, -np.inf), np.full(n, 1.0), cov_src, locs)
        plan = precompute(prob, m=12, ordering_kind="coordinate")
        perm = plan.ordering.permutation
        dense = cov_src.block(np.arange(n), np.arange(n))[np.ix_(perm, perm)]
        rng = np.random.default_rng(1)
        for i in rng.choice(n, size=10, replace=False):
            f = plan.factors[i]
            spp = dense[np.ix_(f.idx_p, f.idx_p)]
            spl = dense[np.ix_(f.idx_p, f.idx_l)]
            sll = dense[np.ix_(f.idx_l, f.idx_l)]
            v_dense = spl.T @ np.linalg.inv(spp)
            cond = sll - v_dense @ spl
            assert np.linalg.norm(f.coeff - v_dense) < 1e-8 * max(1.0, np.linalg.norm(v_dense))
            assert np.linalg.norm(f.cond_cov - cond) < 1e-8 * np.linalg.norm(cond)

    def test_factorization_failure_names_position(self):
        # perfectly duplicated locations with zero nugget: singular blocks
        pts = np.zeros((3, 2))
        locs = LocationSet(pts)
        mat = np.ones((3, 3)) - 2e-16  # symmetric, singular, not even PSD-safe
        mat[np.diag_indices(3)] = 1.0
        codeword = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, -1.0]])
        prob = TruncationProblem(
            np.full(3, -1.0), np.full(3, 1.0), MatrixCovariance(codeword), locs
        )
        with pytest.raises(FactorizationError) as err:
            precompute(prob, m=3)
        assert err.value.index is not None


class TestSampling:
    def test_unconstrained_matches_mvn_moments(self):
        rng = np.random.default_rng(2)
        cov = random_spd(rng, 5)
        locs = LocationSet(rng.random((5, 2)))
        prob = TruncationProblem(
            np.full(5, -np.inf), np.full(5, np.inf), MatrixCovariance(cov), locs
        )
        plan = precompute(prob, m=5)
        ens = sample(plan, 10_000, seed=3)
        se_mean = np.sqrt(np.diag(cov) / 10_000)
        assert np.all(np.abs(ens.samples.mean(0)) < 4 * se_mean)
        emp_cov = np.cov(ens.samples.T)
        se_cov = 4 * np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / 10_000)
        assert np.all(np.abs(emp_cov - cov) < se_cov + 1e-12)

    def test_exact_at_full_conditioning_vs_rejection_oracle(self):
        rng = np.random.default_rng(4)
        n = 4
        cov = random_spd(rng, n)
        sd = np.sqrt(np.diag(cov))
        lo, hi = -1.2 * sd, 0.8 * sd
        locs = LocationSet(rng.random((n, 2)))
        prob = TruncationProblem(lo, hi, MatrixCovariance(cov), locs)
        plan = precompute(prob, m=n)
        ens = sample(plan, 5000, seed=5)
        tgt = LowDimTarget.from_cov(lo, hi, cov)
        rej_rng = substream(5, 999)
        oracle = np.vstack([sample_rejection_oracle(tgt, rej_rng) for _ in range(5000)])
        for j in range(n):
            assert stats.ks_2samp(ens.samples[:, j], oracle[:, j]).pvalue > 0.01

    def test_feasibility_hard_bounds(self):
        locs = grid_locations(6)
        model = CovarianceModel(1.0, 0.2, 1.5, nugget=1e-8)
        n = 36
        lo = np.full(n, -np.inf)
        hi = np.full(n, 0.0)
        prob = TruncationProblem(lo, hi, KernelCovariance(model, locs), locs)
        plan = precompute(prob, m=8)
        ens = sample(plan, 50, seed=6)
        assert ens.samples.max() <= 0.0

    def test_determinism_and_thread_invariance(self):
        locs = grid_locations(5)
        model = CovarianceModel(1.0, 0.3, 1.5, nugget=1e-8)
        n = 25
        prob = TruncationProblem(
            np.full(n, -2.0), np.full(n, 0.5), KernelCovariance(model, locs), locs
        )
        plan = precompute(prob, m=6)
        a = sample(plan, 16, seed=7, threads=1)
        b = sample(plan, 16, seed=7, threads=4)
        c = sample(plan, 16, seed=7, threads=1)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.samples, c.samples)
        d = sample(plan, 16, seed=8)
        assert not np.array_equal(a.samples, d.samples)

    def test_rows_unpermuted_to_original_order(self):
        # distinct per-coordinate windows make column identity visible
        rng = np.random.default_rng(8)
        n = 6
        locs = LocationSet(rng.random((n, 2)))
        centers = np.linspace(-5, 5, n)
        prob = TruncationProblem(
            centers - 0.05, centers + 0.05, MatrixCovariance(np.eye(n)), locs
        )
        plan = precompute(prob, m=3, ordering_kind="random", seed=11)
        ens = sample(plan, 4, seed=12)
        assert np.all(np.abs(ens.samples - centers) <= 0.05)

    def test_ensemble_telemetry_shapes(self):
        locs = grid_locations(4)
        n = 16
        model = CovarianceModel(1.0, 0.3, 1.5, nugget=1e-8)
        prob = TruncationProblem(
            np.full(n, -1.0), np.full(n, 1.0), KernelCovariance(model, locs), locs
        )
        plan = precompute(prob, m=4)
        ens = sample(plan, 7, seed=13)
        assert ens.samples.shape == (7, n)
        assert ens.proposals_per_sample.shape == (7,)
        assert ens.seed == 13
        assert ens.n_samples == 7


class TestScreeningStability:
    def test_posterior_means_stable_in_m(self):
        # doubling the neighbor budget moves per-coordinate means by little;
        # tolerance is empirical, dominated by Monte Carlo noise at N=150
        locs = grid_locations(20)
        model = CovarianceModel(1.0, 0.1, 1.5, nugget=0.0)
        n = 400
        rng = np.random.default_rng(14)
        cov_src = KernelCovariance(model, locs)
        dense = cov_src.block(np.arange(n), np.arange(n))
        truth = np.linalg.cholesky(dense + 1e-10 * np.eye(n)) @ rng.standard_normal(n)
        hi = np.where(truth < 1.0, 1.0, np.inf)  # censor-style one-sided windows
        prob = TruncationProblem(np.full(n, -np.inf), hi, cov_src, locs)
        m30 = sample(precompute(prob, m=30), 150, seed=15)
        m60 = sample(precompute(prob, m=60), 150, seed=16)
        diff = m30.samples.mean(0) - m60.samples.mean(0)
        assert np.sqrt(np.mean(diff**2)) <= 0.1
