"""Partially censored Gaussian-process data as a truncation problem.

A field observed exactly at some sites and only through detection intervals
at others is the limit of a truncated multivariate normal in which observed
coordinates have collapsed intervals.  Rather than passing degenerate
intervals to the sampler, observed sites are ordered first and held at their
known values; they influence censored sites purely through the regression
part of the conditional factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from . import engine
from .gaussian import cholesky_with_jitter
from .geometry import KnnIndex, make_ordering
from .kernels import (
    CovarianceModel,
    KernelCovariance,
    LocationSet,
    covariance_block,
    cross_covariance,
)
from .lowdim import DEFAULT_POLICY, SamplerPolicy


@dataclass(frozen=True)
class CensoredDataset:
    """Sites with either an exact value or a censoring interval.

    ``values`` holds the observation where ``censored`` is False and is
    ignored (conventionally NaN) where it is True.  ``lower``/``upper`` are
    the per-site censoring bounds, meaningful only at censored sites; for
    left-censored data ``lower`` is -inf and ``upper`` the detection limit.
    """

    locations: LocationSet
    values: np.ndarray
    censored: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n = self.locations.n
        values = np.asarray(self.values, dtype=float)
        censored = np.asarray(self.censored, dtype=bool)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if not (values.size == censored.size == lower.size == upper.size == n):
            raise ValueError("all per-site arrays must have length n")
        obs = ~censored
        if np.any(~np.isfinite(values[obs])):
            raise ValueError("observed sites must carry a finite value")
        if np.any(lower[censored] >= upper[censored]):
            raise ValueError("censored sites need lower < upper")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "censored", censored)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n(self) -> int:
        return self.locations.n

    @property
    def n_observed(self) -> int:
        return int(np.sum(~self.censored))

    @property
    def n_censored(self) -> int:
        return int(np.sum(self.censored))

    @property
    def observed_idx(self) -> np.ndarray:
        return np.nonzero(~self.censored)[0]

    @property
    def censored_idx(self) -> np.ndarray:
        return np.nonzero(self.censored)[0]


def left_censor(locations: LocationSet, field: np.ndarray, threshold: float) -> CensoredDataset:
    """Censor a simulated field below a detection threshold."""
    field = np.asarray(field, dtype=float)
    censored = field < threshold
    values = np.where(censored, np.nan, field)
    lower = np.where(censored, -np.inf, np.nan)
    upper = np.where(censored, threshold, np.nan)
    return CensoredDataset(locations, values, censored, lower, upper)


def build_censored_problem(
    data: CensoredDataset,
    model: CovarianceModel,
    m: int,
    ordering_kind: str = "coordinate",
    seed: int = 0,
    neighbor_policy: str = "all",
) -> engine.SnnPlan:
    """Plan for posterior sampling of the latent field at censored sites.

    Observed sites come first (each group internally arranged by
    ``ordering_kind``), so censored positions never see an observed site in
    their later-ordered block and no degenerate interval ever reaches the
    low-dimensional sampler.  ``neighbor_policy='split-obs-cens'`` splits the
    neighbor budget evenly between the censored and observed pools.
    """
    if data.n_censored == 0:
        raise ValueError("nothing to sample: dataset has no censored sites")
    obs = data.observed_idx
    cen = data.censored_idx

    def group_perm(idx: np.ndarray, sub_seed: int) -> np.ndarray:
        if idx.size == 0:
            return idx
        sub = make_ordering(data.locations.subset(idx), ordering_kind, sub_seed)
        return idx[sub.permutation]

    perm = np.concatenate([group_perm(obs, seed), group_perm(cen, seed + 1)])

    lower = np.full(data.n, -np.inf)
    upper = np.full(data.n, np.inf)
    lower[cen] = data.lower[cen]
    upper[cen] = data.upper[cen]

    problem = engine.TruncationProblem(
        lower=lower,
        upper=upper,
        cov=KernelCovariance(model, data.locations),
        locations=data.locations,
    )
    pool_labels = data.censored if neighbor_policy == "split-obs-cens" else None
    return engine.precompute(
        problem,
        m,
        "given",
        seed,
        given_order=perm,
        pool_labels=pool_labels,
        fixed_mask=~data.censored,
        fixed_values=np.where(data.censored, 0.0, data.values),
    )


def sample_censored_posterior(
    snn_plan: engine.SnnPlan,
    data: CensoredDataset,
    n_samples: int,
    seed: int,
    threads: int = 1,
    policy: SamplerPolicy = DEFAULT_POLICY,
    full_field: bool = False,
) -> engine.SampleEnsemble:
    """Joint posterior samples of the latent field at censored sites.

    Each row satisfies every censoring interval.  With ``full_field`` the
    observed values are echoed in their columns and the ensemble covers all
    sites; otherwise columns are restricted to the censored sites, labelled
    by their original indices.
    """
    ens = engine.sample(snn_plan, n_samples, seed, threads=threads, policy=policy)
    if full_field:
        return ens
    cen = data.censored_idx
    return engine.SampleEnsemble(
        samples=ens.samples[:, cen],
        seed=seed,
        indices=cen,
        proposals_per_sample=ens.proposals_per_sample,
        gibbs_fallbacks_per_sample=ens.gibbs_fallbacks_per_sample,
    )


def krige_predict(
    data: CensoredDataset,
    ensemble: engine.SampleEnsemble,
    model: CovarianceModel,
    grid: LocationSet,
    m: int = 30,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior predictive mean and sd over a prediction grid.

    For every posterior sample the zero-mean simple-kriging conditional mean
    at each grid point is computed from the sample-completed field (observed
    values plus that sample's censored values), conditioning on the ``m``
    nearest data sites for scalability.  The returned sd combines the
    kriging variance with the across-sample spread of the kriging means.
    """
    if ensemble.n_samples < 1:
        raise ValueError("ensemble is empty")
    if grid.dim != data.locations.dim:
        raise ValueError("grid dimension does not match the data locations")
    if grid.metric != data.locations.metric:
        raise ValueError("grid metric does not match the data locations")

    n = data.n
    fields = np.tile(np.where(data.censored, 0.0, data.values), (ensemble.n_samples, 1))
    fields[:, ensemble.indices] = ensemble.samples

    index = KnnIndex(data.locations.effective_coords())
    k = min(m, n)
    prior_var = model.variance + model.nugget
    grid_pts = grid.points
    means = np.empty(grid.n)
    sds = np.empty(grid.n)
    grid_eff = grid.effective_coords()
    for g in range(grid.n):
        idx = index.query(grid_eff[g], k)
        sig_nn = covariance_block(model, data.locations, idx, idx)
        k_gn = cross_covariance(model, grid.subset([g]), data.locations.subset(idx))[0]
        chol, _ = cholesky_with_jitter(sig_nn)
        weights = cho_solve((chol, True), k_gn)
        sample_means = fields[:, idx] @ weights
        krig_var = max(prior_var - float(weights @ k_gn), 0.0)
        means[g] = float(np.mean(sample_means))
        spread = float(np.var(sample_means, ddof=1)) if ensemble.n_samples > 1 else 0.0
        sds[g] = float(np.sqrt(krig_var + spread))
    return means, sds
