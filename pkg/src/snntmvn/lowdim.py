"""Exact sampling from low-dimensional truncated multivariate normals.

The workhorse is an accept-reject scheme on the separation-of-variables
(SOV) sequential proposal: the target TN(a, b; Sigma) is written through its
Cholesky factor as a chain of univariate truncated normals, optionally
shifted by an exponential tilting vector.  The tilting parameters minimize a
smooth upper bound on the log rejection constant via damped Newton
iterations on the bound's stationarity system; zero tilt is always a valid
(if less efficient) fallback, in which case the scheme reduces to plain SOV
rejection.  If acceptance collapses entirely, a Gibbs sweep from the
proposal's mode takes over.

Severity reordering (most heavily truncated coordinates first) and tilting
only pay off under hard truncation, so both sit behind a deterministic gate
on the plain proposal's zero-path acceptance bound; mildly truncated targets
go straight to plain SOV rejection on the unpermuted factor.

Two independent oracle samplers live here as well: naive rejection from the
untruncated Gaussian, and a systematic-scan Gibbs sampler.  They are used to
verify the accept-reject path and intentionally share none of its proposal
machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import ndtr, ndtri

from .gaussian import (
    TAIL_SWITCH,
    _trunc_std_scalar,
    cholesky_with_jitter,
    log_interval_prob,
    trunc_std_batch,
    trunc_std_mean,
)

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TINY = 1e-320


class OracleInapplicableError(RuntimeError):
    """Rejection oracle exceeded its try budget; the oracle does not apply."""


@dataclass(frozen=True)
class LowDimTarget:
    """TN(lower, upper; Sigma) with Sigma given through its Cholesky factor."""

    lower: np.ndarray
    upper: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        chol = np.atleast_2d(np.asarray(self.chol, dtype=float))
        q = lower.size
        if upper.size != q or chol.shape != (q, q):
            raise ValueError("bounds and Cholesky factor dimensions disagree")
        if not np.all(lower < upper):
            raise ValueError("need lower < upper strictly in every coordinate")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("bounds must not be NaN")
        if not np.all(np.isfinite(chol)):
            raise ValueError("Cholesky factor must be finite")
        if np.any(np.diag(chol) <= 0):
            raise ValueError("Cholesky factor must have a positive diagonal")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.lower.size

    def cov(self) -> np.ndarray:
        return self.chol @ self.chol.T

    @classmethod
    def from_cov(cls, lower, upper, cov) -> "LowDimTarget":
        chol, _ = cholesky_with_jitter(np.asarray(cov, dtype=float))
        return cls(lower, upper, chol)


@dataclass(frozen=True)
class SamplerPolicy:
    """Tuning knobs for the accept-reject sampler and its fallbacks."""

    min_accept: float = 1e-3
    trial_window: int = 200
    gibbs_burnin_per_dim: int = 100
    # escalating proposal batches; the schedule is padded with its last entry
    # until the trial window is covered
    proposal_schedule: tuple[int, ...] = (4, 16, 60, 120)
    newton_max_iter: int = 50
    newton_tol: float = 1e-8
    # skip severity reordering and the tilting solve when the plain
    # proposal's zero-path log bound is already above this; plain rejection
    # at a few percent acceptance is cheaper than the Newton solve
    tilt_skip_log_accept: float = math.log(0.05)


DEFAULT_POLICY = SamplerPolicy()


@dataclass
class DrawStats:
    """Telemetry for one or more low-dimensional draws (counters add up)."""

    proposals: int = 0
    accepted: int = 0
    tilted_draws: int = 0
    gibbs_fallbacks: int = 0
    bound_violations: int = 0

    @property
    def used_gibbs(self) -> bool:
        return self.gibbs_fallbacks > 0

    @property
    def used_tilt(self) -> bool:
        return self.tilted_draws > 0


# ---------------------------------------------------------------------------
# SOV proposal machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SovGeometry:
    """Diagonally scaled Cholesky chain for SOV proposals.

    ``perm`` maps chain position -> target coordinate; bounds must be
    permuted and divided by ``scale`` before entering the chain.
    """

    perm: np.ndarray | None  # None means identity
    scale: np.ndarray        # Cholesky diagonal
    ltri: np.ndarray         # unit-diagonal scaled Cholesky factor
    strict: np.ndarray       # ltri with zero diagonal


def sov_geometry(chol: np.ndarray, perm: np.ndarray | None = None) -> SovGeometry:
    scale = np.diag(chol).copy()
    ltri = chol / scale[:, None]
    return SovGeometry(perm=perm, scale=scale, ltri=ltri, strict=ltri - np.eye(chol.shape[0]))


def _severity_geometry(target: LowDimTarget) -> tuple[SovGeometry, np.ndarray, np.ndarray]:
    """Severity-ordered chain: most heavily truncated coordinates first.

    A pure proposal change; the target distribution is untouched.  Returns
    the geometry plus the scaled bounds.
    """
    cov = target.cov()
    sd = np.sqrt(np.diag(cov))
    severity = log_interval_prob(target.lower / sd, target.upper / sd)
    perm = np.lexsort((np.arange(target.dim), severity))
    chol, _ = cholesky_with_jitter(cov[np.ix_(perm, perm)])
    geom = sov_geometry(chol, perm)
    return geom, target.lower[perm] / geom.scale, target.upper[perm] / geom.scale


def _sov_propose(
    rng: np.random.Generator,
    geom: SovGeometry,
    lo: np.ndarray,
    hi: np.ndarray,
    tilt: np.ndarray | None,
    count: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` SOV proposals; returns (eta, log density ratio).

    ``eta`` has shape (q, count).  The log ratio is the target-over-proposal
    log density up to the common normalizing constant, the quantity the
    acceptance bound refers to.
    """
    q = lo.size
    strict = geom.strict
    eta = np.empty((q, count))
    logratio = np.zeros(count)
    uniforms = rng.random((q, count))
    for k in range(q):
        tk = 0.0 if tilt is None else float(tilt[k])
        if k:
            shift = strict[k, :k] @ eta[:k]
            tl = (lo[k] - tk) - shift
            tu = (hi[k] - tk) - shift
        else:
            tl = np.full(count, lo[k] - tk)
            tu = np.full(count, hi[k] - tk)
        # fast path: interval never reaches a far tail, inverse CDF is safe
        if tl.max() < TAIL_SWITCH and tu.min() > -TAIL_SWITCH:
            pl = ndtr(tl)
            pu = ndtr(tu)
            width = np.maximum(pu - pl, _TINY)
            u = np.maximum(pl + width * uniforms[k], _TINY)
            draw = np.minimum(np.maximum(ndtri(u), tl), tu)
            logratio += np.log(width)
        else:
            draw = trunc_std_batch(rng, tl, tu)
            logratio += log_interval_prob(tl, tu)
        if tk != 0.0:
            eta[k] = tk + draw
            logratio += 0.5 * tk * tk - tk * eta[k]
        else:
            eta[k] = draw
    return eta, logratio


def _finish(
    geom: SovGeometry, eta_col: np.ndarray, target: LowDimTarget
) -> np.ndarray:
    z_chain = geom.scale * (geom.ltri @ eta_col)
    if geom.perm is None:
        z = z_chain
    else:
        z = np.empty(eta_col.size)
        z[geom.perm] = z_chain
    return np.minimum(np.maximum(z, target.lower), target.upper)


def _proposal_mode(geom: SovGeometry, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Deterministic feasible point: the sequential-mean path of the plain
    SOV proposal, mapped back to the original coordinates."""
    q = lo.size
    eta = np.empty(q)
    for k in range(q):
        shift = geom.strict[k, :k] @ eta[:k] if k else 0.0
        eta[k] = float(trunc_std_mean(lo[k] - shift, hi[k] - shift)[0])
    z_chain = geom.scale * (geom.ltri @ eta)
    if geom.perm is None:
        return z_chain
    z = np.empty(q)
    z[geom.perm] = z_chain
    return z


# ---------------------------------------------------------------------------
# exponential tilting
# ---------------------------------------------------------------------------


def _bound_value(geom: SovGeometry, lo, hi, x: np.ndarray, mu: np.ndarray) -> float:
    c = geom.strict @ x
    lt = lo - mu - c
    ut = hi - mu - c
    terms = log_interval_prob(lt, ut) + 0.5 * mu * mu - x * mu
    return float(np.sum(terms))


def _bound_grad_jac(
    geom: SovGeometry, lo, hi, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Jacobian of the acceptance-bound stationarity system.

    Unknowns are the first q-1 entries of the representative path ``x`` and
    of the tilting vector ``mu``; the last entries are pinned to zero.
    """
    q = lo.size
    strict = geom.strict
    x = np.zeros(q)
    mu = np.zeros(q)
    x[: q - 1] = y[: q - 1]
    mu[: q - 1] = y[q - 1 :]
    c = strict @ x
    lt = lo - mu - c
    ut = hi - mu - c
    w = log_interval_prob(lt, ut)
    lt_f = np.where(np.isfinite(lt), lt, 0.0)
    ut_f = np.where(np.isfinite(ut), ut, 0.0)
    pl = np.where(np.isfinite(lt), np.exp(-0.5 * lt_f**2 - w) * _INV_SQRT2PI, 0.0)
    pu = np.where(np.isfinite(ut), np.exp(-0.5 * ut_f**2 - w) * _INV_SQRT2PI, 0.0)
    big_p = pl - pu
    r = q - 1
    grad = np.empty(2 * r)
    grad[:r] = -mu[:r] + big_p @ strict[:, :r]
    grad[r:] = (mu - x + big_p)[:r]
    dp = -(big_p**2) + lt_f * pl - ut_f * pu
    dl = dp[:, None] * strict
    mx = dl[:r, :r] - np.eye(r)
    jac = np.empty((2 * r, 2 * r))
    jac[:r, :r] = strict[:, :r].T @ dl[:, :r]
    jac[:r, r:] = mx.T
    jac[r:, :r] = mx
    jac[r:, r:] = np.diag(1.0 + dp[:r])
    return grad, jac


def _solve_tilt(
    geom: SovGeometry, lo, hi, policy: SamplerPolicy
) -> tuple[np.ndarray, float] | None:
    """Damped Newton on the stationarity system; None on non-convergence."""
    q = lo.size
    y = np.zeros(2 * (q - 1))
    grad, jac = _bound_grad_jac(geom, lo, hi, y)
    gnorm = float(np.max(np.abs(grad)))
    for _ in range(policy.newton_max_iter):
        if gnorm < policy.newton_tol:
            break
        try:
            step = np.linalg.solve(jac, -grad)
        except np.linalg.LinAlgError:
            return None
        scale = 1.0
        for _ in range(20):
            y_new = y + scale * step
            grad_new, jac_new = _bound_grad_jac(geom, lo, hi, y_new)
            gnorm_new = float(np.max(np.abs(grad_new)))
            if np.isfinite(gnorm_new) and gnorm_new < gnorm:
                break
            scale *= 0.5
        else:
            return None
        y, grad, jac, gnorm = y_new, grad_new, jac_new, gnorm_new
    if gnorm >= policy.newton_tol:
        return None
    x = np.zeros(q)
    mu = np.zeros(q)
    x[: q - 1] = y[: q - 1]
    mu[: q - 1] = y[q - 1 :]
    psistar = _bound_value(geom, lo, hi, x, mu)
    if not np.isfinite(psistar):
        return None
    return mu, psistar


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def plain_log_accept_bound(geom: SovGeometry, lo: np.ndarray, hi: np.ndarray) -> float:
    """Zero-path log bound of the plain SOV proposal's acceptance."""
    if lo.max() < TAIL_SWITCH and hi.min() > -TAIL_SWITCH:
        width = np.maximum(ndtr(hi) - ndtr(lo), _TINY)
        return float(np.sum(np.log(width)))
    return float(np.sum(log_interval_prob(lo, hi)))


def _target_unchecked(lower: np.ndarray, upper: np.ndarray, chol: np.ndarray) -> LowDimTarget:
    # hot-path constructor: callers guarantee the invariants hold
    obj = object.__new__(LowDimTarget)
    object.__setattr__(obj, "lower", lower)
    object.__setattr__(obj, "upper", upper)
    object.__setattr__(obj, "chol", chol)
    return obj


def _accept_reject(
    target: LowDimTarget,
    geom: SovGeometry,
    lo: np.ndarray,
    hi: np.ndarray,
    tilt: np.ndarray | None,
    psistar: float,
    rng: np.random.Generator,
    policy: SamplerPolicy,
    stats: DrawStats,
) -> np.ndarray | None:
    proposals_here = 0
    round_no = 0
    sched = policy.proposal_schedule
    while proposals_here < policy.trial_window:
        batch = sched[round_no] if round_no < len(sched) else sched[-1]
        round_no += 1
        eta, logratio = _sov_propose(rng, geom, lo, hi, tilt, batch)
        logu = np.log(rng.random(batch))
        proposals_here += batch
        stats.proposals += batch
        stats.bound_violations += int(np.sum(logratio > psistar + 1e-9))
        accept = logu < logratio - psistar
        if np.any(accept):
            stats.accepted += 1
            return _finish(geom, eta[:, int(np.argmax(accept))], target)
    return None


def sample_lowdim_tmvn(
    target: LowDimTarget,
    rng: np.random.Generator,
    policy: SamplerPolicy = DEFAULT_POLICY,
    stats: DrawStats | None = None,
    geom: SovGeometry | None = None,
) -> np.ndarray:
    """One exact draw from TN(lower, upper; Sigma).

    Dimension one delegates to the univariate sampler.  Otherwise proposals
    come from the (possibly severity-reordered and tilted) SOV chain and are
    accepted against the tilting bound; if no proposal lands within
    ``policy.trial_window`` attempts the draw falls back to
    ``policy.gibbs_burnin_per_dim * dim`` Gibbs sweeps started at the
    proposal's mode.  Returned samples always satisfy the bounds.

    ``geom`` may carry the identity-order chain of ``target.chol`` when the
    caller has it precomputed (the sequential engine does); it is only a
    shortcut and never changes the draw's distribution.
    """
    q = target.dim
    if stats is None:
        stats = DrawStats()
    if q == 1:
        sd = float(target.chol[0, 0])
        lo = float(target.lower[0])
        hi = float(target.upper[0])
        stats.proposals += 1
        stats.accepted += 1
        x = sd * _trunc_std_scalar(rng, lo / sd, hi / sd)
        return np.array([min(max(x, lo), hi)])

    if geom is None:
        geom = sov_geometry(target.chol)
    lo = target.lower / geom.scale
    hi = target.upper / geom.scale

    tilt: np.ndarray | None = None
    psistar = 0.0
    if plain_log_accept_bound(geom, lo, hi) < policy.tilt_skip_log_accept:
        geom, lo, hi = _severity_geometry(target)
        solved = _solve_tilt(geom, lo, hi, policy)
        if solved is not None:
            tilt, psistar = solved
            stats.tilted_draws += 1

    z = _accept_reject(target, geom, lo, hi, tilt, psistar, rng, policy, stats)
    if z is not None:
        return z

    # observed acceptance over the trial window fell below min_accept
    stats.gibbs_fallbacks += 1
    start = _proposal_mode(geom, lo, hi)
    sweeps = policy.gibbs_burnin_per_dim * q
    draws = sample_gibbs_oracle(target, rng, burnin=sweeps, thin=1, count=1, start=start)
    return draws[0]


def sample_rejection_oracle(
    target: LowDimTarget,
    rng: np.random.Generator,
    max_tries: int = 1_000_000,
) -> np.ndarray:
    """Naive rejection: draw from N(0, Sigma) until the bounds hold.

    Exact by construction; intended for verification on small, mildly
    truncated targets.  Raises :class:`OracleInapplicableError` once
    ``max_tries`` proposals have all missed.
    """
    q = target.dim
    tries = 0
    while tries < max_tries:
        batch = int(min(1024, max_tries - tries))
        z = target.chol @ rng.standard_normal((q, batch))
        ok = np.all((z >= target.lower[:, None]) & (z <= target.upper[:, None]), axis=0)
        tries += batch
        hits = np.nonzero(ok)[0]
        if hits.size:
            return z[:, int(hits[0])].copy()
    raise OracleInapplicableError(
        f"no accepted draw in {max_tries} tries; acceptance too small for this oracle"
    )


def sample_gibbs_oracle(
    target: LowDimTarget,
    rng: np.random.Generator,
    burnin: int,
    thin: int = 1,
    count: int = 1,
    start: np.ndarray | None = None,
) -> np.ndarray:
    """Systematic-scan Gibbs sampling of TN(lower, upper; Sigma).

    Every full conditional is a univariate truncated normal whose mean and
    variance come from the precision matrix (formed once from the Cholesky
    factor).  After ``burnin`` sweeps, every ``thin``-th state is emitted
    until ``count`` samples are collected.  Shape: (count, dim).
    """
    if thin < 1 or count < 1 or burnin < 0:
        raise ValueError("need burnin >= 0, thin >= 1, count >= 1")
    q = target.dim
    prec = cho_solve((target.chol, True), np.eye(q))
    cond_sd = [float(x) for x in 1.0 / np.sqrt(np.diag(prec))]
    inv_diag = [float(x) for x in 1.0 / np.diag(prec)]
    prec_cols = [np.ascontiguousarray(prec[:, j]) for j in range(q)]

    if start is None:
        geom, lo, hi = _severity_geometry(target)
        z = _proposal_mode(geom, lo, hi)
    else:
        z = np.array(start, dtype=float)
        z = np.minimum(np.maximum(z, target.lower), target.upper)
    w = prec @ z

    lower = [float(x) for x in target.lower]
    upper = [float(x) for x in target.upper]
    out = np.empty((count, q))
    buf = np.empty(q)
    emitted = 0
    sweep = 0
    while emitted < count:
        for j in range(q):
            zj = z.item(j)
            mean = zj - w.item(j) * inv_diag[j]
            sd = cond_sd[j]
            x = _trunc_std_scalar(rng, (lower[j] - mean) / sd, (upper[j] - mean) / sd)
            znew = mean + sd * x
            delta = znew - zj
            if delta != 0.0:
                z[j] = znew
                np.multiply(prec_cols[j], delta, out=buf)
                w += buf
        sweep += 1
        if sweep % 64 == 0:
            w = prec @ z  # refresh accumulated rounding drift
        if sweep > burnin and (sweep - burnin) % thin == 0:
            out[emitted] = np.minimum(np.maximum(z, target.lower), target.upper)
            emitted += 1
    return out
