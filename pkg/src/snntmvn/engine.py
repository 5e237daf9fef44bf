"""Sequential nearest-neighbor (SNN) sampling engine.

Precompute orders the coordinates, builds per-position neighbor sets, and
factorizes the conditional Gaussian of each later-ordered block given its
previously ordered neighbors; total work O(n m^3).  Sampling then walks the
ordering once per sample: each coordinate's value is the first entry of a
joint draw from the neighbor-conditional truncated normal, shifted by the
regression on already-drawn neighbor values.

Per-sample randomness comes from independent substreams of the master seed,
so ensembles are bit-identical regardless of how many workers run them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gaussian import _trunc_std_scalar, conditional_factors
from .geometry import NeighborPlan, Ordering, build_neighbor_plan, make_ordering
from .kernels import KernelCovariance, LocationSet, MatrixCovariance
from .lowdim import (
    DEFAULT_POLICY,
    DrawStats,
    SamplerPolicy,
    SovGeometry,
    _target_unchecked,
    sample_lowdim_tmvn,
    sov_geometry,
)
from .rng import substream


@dataclass(frozen=True)
class TruncationProblem:
    """Target TN(lower, upper; Sigma) plus the geometry behind Sigma.

    ``cov`` is either a :class:`KernelCovariance` (kernel + locations) or a
    :class:`MatrixCovariance`.  Locations drive the ordering and neighbor
    search; they may be omitted only when every conditioning set covers all
    coordinates (m >= n).
    """

    lower: np.ndarray
    upper: np.ndarray
    cov: KernelCovariance | MatrixCovariance
    locations: LocationSet | None = None

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.size != upper.size:
            raise ValueError("bound vectors disagree in length")
        if lower.size != self.cov.n:
            raise ValueError("bounds and covariance dimension disagree")
        if not np.all(lower < upper):
            raise ValueError("need lower < upper strictly (equality constraints "
                             "go through the censored-data adapter)")
        if self.locations is not None and self.locations.n != lower.size:
            raise ValueError("location count and bound length disagree")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n(self) -> int:
        return self.lower.size


@dataclass(frozen=True)
class _PositionFactors:
    """Factors plus cached slices for one sampled position."""

    idx_p: np.ndarray
    idx_l: np.ndarray
    coeff: np.ndarray
    cond_cov: np.ndarray
    cond_chol: np.ndarray
    lo_l: np.ndarray
    hi_l: np.ndarray
    sd1: float  # conditional sd of the position itself (q == 1 fast path)
    geom: SovGeometry | None = None  # identity-order SOV chain of cond_chol


@dataclass(frozen=True)
class SnnPlan:
    """Everything precomputed for sampling: ordering, neighbors, factors.

    Bounds, fixed values, and factors are stored in ordered-position
    indexing; :meth:`to_original` maps sampled vectors back.
    """

    ordering: Ordering
    plan: NeighborPlan
    factors: tuple[_PositionFactors | None, ...]
    lower: np.ndarray
    upper: np.ndarray
    fixed_mask: np.ndarray
    fixed_values: np.ndarray
    m: int
    jitter_activations: int = 0

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def free_positions(self) -> np.ndarray:
        return np.nonzero(~self.fixed_mask)[0]

    def to_original(self, row_ordered: np.ndarray) -> np.ndarray:
        out = np.empty_like(row_ordered)
        out[self.ordering.permutation] = row_ordered
        return out


@dataclass(frozen=True)
class SampleEnsemble:
    """Samples in original index order plus seed provenance and telemetry."""

    samples: np.ndarray  # (N, n)
    seed: int
    indices: np.ndarray  # original-order column labels (identity for full fields)
    proposals_per_sample: np.ndarray | None = None
    gibbs_fallbacks_per_sample: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def posterior_mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)


def _full_conditioning_plan(n: int) -> NeighborPlan:
    past = tuple(np.arange(i) for i in range(n))
    later = tuple(np.arange(i, n) for i in range(n))
    return NeighborPlan(past, later, n)


def precompute(
    problem: TruncationProblem,
    m: int,
    ordering_kind: str = "coordinate",
    seed: int = 0,
    *,
    given_order: np.ndarray | None = None,
    pool_labels: np.ndarray | None = None,
    fixed_mask: np.ndarray | None = None,
    fixed_values: np.ndarray | None = None,
) -> SnnPlan:
    """Order, plan neighbors, and factorize all conditionals.

    ``fixed_mask``/``fixed_values`` (original indexing) mark coordinates that
    are held at known values rather than sampled; every fixed coordinate must
    precede every free one under the chosen ordering, which the censored-data
    adapter arranges.  Raises :class:`~snntmvn.gaussian.FactorizationError`
    annotated with the failing position if a conditional covariance cannot be
    factorized.
    """
    n = problem.n
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if fixed_mask is None:
        fixed_mask = np.zeros(n, dtype=bool)
        fixed_values = np.zeros(n)
    else:
        fixed_mask = np.asarray(fixed_mask, dtype=bool)
        fixed_values = np.where(fixed_mask, np.asarray(fixed_values, dtype=float), 0.0)

    if problem.locations is not None:
        ordering = make_ordering(problem.locations, ordering_kind, seed, given_order)
    else:
        if m < n:
            raise ValueError("locations are required when m < n")
        perm = np.arange(n) if given_order is None else given_order
        ordering = make_ordering(LocationSet(np.zeros((n, 1))), "given", given=perm)

    perm = ordering.permutation
    lower = problem.lower[perm]
    upper = problem.upper[perm]
    fixed_mask_o = fixed_mask[perm]
    fixed_values_o = fixed_values[perm]

    if np.any(fixed_mask_o):
        last_fixed = int(np.max(np.nonzero(fixed_mask_o)[0]))
        if np.any(~fixed_mask_o[: last_fixed + 1]):
            raise ValueError("fixed coordinates must all precede free ones in the ordering")

    if problem.locations is not None and m < n:
        labels_o = None if pool_labels is None else np.asarray(pool_labels, dtype=bool)[perm]
        plan = build_neighbor_plan(problem.locations.subset(perm), m, pool_labels=labels_o)
    else:
        plan = _full_conditioning_plan(n)

    cov_o = problem.cov.permuted(perm)
    factors: list[_PositionFactors | None] = []
    jitters = 0
    for i in range(n):
        if fixed_mask_o[i]:
            factors.append(None)
            continue
        base = conditional_factors(cov_o, plan, i)
        if base.jitter > 0:
            jitters += 1
        q_i = plan.later[i].size
        factors.append(
            _PositionFactors(
                idx_p=plan.past[i],
                idx_l=plan.later[i],
                coeff=base.coeff,
                cond_cov=base.cond_cov,
                cond_chol=base.cond_chol,
                lo_l=lower[plan.later[i]],
                hi_l=upper[plan.later[i]],
                sd1=float(np.sqrt(base.cond_cov[0, 0])),
                geom=sov_geometry(base.cond_chol) if q_i > 1 else None,
            )
        )

    return SnnPlan(
        ordering=ordering,
        plan=plan,
        factors=tuple(factors),
        lower=lower,
        upper=upper,
        fixed_mask=fixed_mask_o,
        fixed_values=fixed_values_o,
        m=m,
        jitter_activations=jitters,
    )


def marginal_keep_first(joint_sample: np.ndarray) -> float:
    """First entry of a joint conditional draw.

    The sequential scheme samples the whole later-ordered neighbor block
    jointly, then keeps only the entry belonging to the current coordinate;
    this is how the analytically intractable marginal is drawn without ever
    being written down.
    """
    joint_sample = np.atleast_1d(joint_sample)
    if joint_sample.size == 0:
        raise ValueError("empty joint sample")
    return float(joint_sample[0])


def _draw_one_sample(
    snn_plan: SnnPlan,
    rng: np.random.Generator,
    policy: SamplerPolicy,
    stats: DrawStats,
) -> np.ndarray:
    y = snn_plan.fixed_values.copy()
    lower, upper = snn_plan.lower, snn_plan.upper
    for i in snn_plan.free_positions:
        f = snn_plan.factors[i]
        if f.idx_p.size:
            mu = f.coeff @ y[f.idx_p]
        else:
            mu = np.zeros(f.idx_l.size)
        if f.idx_l.size == 1:
            mu0 = float(mu[0])
            sd = f.sd1
            lo = (float(f.lo_l[0]) - mu0) / sd
            hi = (float(f.hi_l[0]) - mu0) / sd
            stats.proposals += 1
            stats.accepted += 1
            val = mu0 + sd * _trunc_std_scalar(rng, lo, hi)
            y[i] = min(max(val, float(f.lo_l[0])), float(f.hi_l[0]))
        else:
            target = _target_unchecked(f.lo_l - mu, f.hi_l - mu, f.cond_chol)
            z = sample_lowdim_tmvn(target, rng, policy, stats, geom=f.geom)
            y[i] = marginal_keep_first(z) + float(mu[0])
            y[i] = min(max(y[i], float(f.lo_l[0])), float(f.hi_l[0]))
    if not (np.all(y >= lower) and np.all(y <= upper)):  # pragma: no cover
        raise AssertionError("sample violates its bounds")
    return y


def sample(
    snn_plan: SnnPlan,
    n_samples: int,
    seed: int,
    threads: int = 1,
    policy: SamplerPolicy = DEFAULT_POLICY,
) -> SampleEnsemble:
    """Draw ``n_samples`` joint samples; rows are in original index order.

    Sample ``k`` consumes only ``substream(seed, k)``, so the ensemble is
    identical whether drawn serially or with any number of worker threads.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = snn_plan.n
    out = np.empty((n_samples, n))
    proposals = np.zeros(n_samples, dtype=int)
    gibbs = np.zeros(n_samples, dtype=int)

    def run(k: int) -> None:
        rng = substream(seed, k)
        stats = DrawStats()
        row = _draw_one_sample(snn_plan, rng, policy, stats)
        out[k] = snn_plan.to_original(row)
        proposals[k] = stats.proposals
        gibbs[k] = stats.gibbs_fallbacks

    if threads <= 1:
        for k in range(n_samples):
            run(k)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n_samples)))

    return SampleEnsemble(
        samples=out,
        seed=seed,
        indices=np.arange(n),
        proposals_per_sample=proposals,
        gibbs_fallbacks_per_sample=gibbs,
    )
