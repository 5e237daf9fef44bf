"""Dense small-matrix linear algebra and univariate normal primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import erfcx, ndtr, ndtri

_SQRT2 = math.sqrt(2.0)
_LOG2 = math.log(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

# standardized distance into a tail beyond which inverse-CDF sampling is
# replaced by exponential-proposal rejection
TAIL_SWITCH = 6.0

JITTER_BASE = 1e-10
JITTER_GROWTH = 10.0
JITTER_MAX_RETRIES = 3


class FactorizationError(RuntimeError):
    """Cholesky failed even after the jitter ladder was exhausted."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"{message} (at ordered index {index})")
        self.index = index


def cholesky_with_jitter(
    a: np.ndarray,
    index: int | None = None,
) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``a``, escalating diagonal jitter on failure.

    Jitter ladder: 0, then ``1e-10 * tr(a)/dim`` growing tenfold per retry,
    at most three retries.  Returns ``(L, jitter_used)`` so callers can log
    activations; raises :class:`FactorizationError` naming ``index`` if the
    matrix stays indefinite.
    """
    a = np.asarray(a, dtype=float)
    dim = a.shape[0]
    base = JITTER_BASE * np.trace(a) / max(dim, 1)
    if base <= 0:
        base = JITTER_BASE
    jitter = 0.0
    for attempt in range(JITTER_MAX_RETRIES + 1):
        try:
            mat = a if jitter == 0.0 else a + jitter * np.eye(dim)
            return np.linalg.cholesky(mat), jitter
        except np.linalg.LinAlgError:
            jitter = base if jitter == 0.0 else jitter * JITTER_GROWTH
    raise FactorizationError(
        f"matrix of size {dim} not positive definite after max jitter {jitter / JITTER_GROWTH:.3e}",
        index,
    )


@dataclass(frozen=True)
class ConditionalFactors:
    """Precomputed conditional-Gaussian factors for one ordered position.

    ``coeff`` is the regression matrix of the later-ordered block on the
    previously ordered block, ``cond_cov`` the conditional covariance of the
    later block, and ``cond_chol`` its lower Cholesky factor.
    """

    coeff: np.ndarray
    cond_cov: np.ndarray
    cond_chol: np.ndarray
    jitter: float = 0.0


def conditional_factors(cov_source, plan, i: int) -> ConditionalFactors:
    """Factors for position ``i`` of a neighbor plan (regression form).

    The inverse of the past-block covariance is never formed; the regression
    coefficients come from triangular solves against its Cholesky factor.
    """
    idx_p = plan.past[i]
    idx_l = plan.later[i]
    sig_ll = cov_source.block(idx_l, idx_l)
    if idx_p.size == 0:
        cond_cov = 0.5 * (sig_ll + sig_ll.T)
        chol, jit = cholesky_with_jitter(cond_cov, index=i)
        return ConditionalFactors(np.zeros((idx_l.size, 0)), cond_cov, chol, jit)
    sig_pp = cov_source.block(idx_p, idx_p)
    sig_pl = cov_source.block(idx_p, idx_l)
    lp, _ = cholesky_with_jitter(sig_pp, index=i)
    coeff = cho_solve((lp, True), sig_pl).T
    cond_cov = sig_ll - coeff @ sig_pl
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    chol, jit = cholesky_with_jitter(cond_cov, index=i)
    return ConditionalFactors(coeff, cond_cov, chol, jit)


def std_normal_cdf(x):
    """Standard normal CDF."""
    return ndtr(x)


def std_normal_quantile(p):
    """Standard normal quantile; requires p strictly inside (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("quantile requires probabilities strictly inside (0, 1)")
    return ndtri(p)


def _log_tail(x: np.ndarray) -> np.ndarray:
    """log P(Z > x), stable for large x via the scaled complementary erf."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    finite = np.isfinite(x)
    xf = x[finite]
    out[finite] = -0.5 * xf * xf - _LOG2 + np.log(erfcx(xf / _SQRT2))
    out[x == -np.inf] = 0.0
    return out


def log_interval_prob(lo, hi) -> np.ndarray:
    """log P(lo < Z < hi) for a standard normal, accurate in both tails."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    out = np.empty(np.broadcast(lo, hi).shape)
    lo, hi = np.broadcast_arrays(lo, hi)
    pos = lo > 0  # both bounds in the upper tail
    neg = hi < 0  # both bounds in the lower tail
    mid = ~(pos | neg)
    if np.any(pos):
        la = _log_tail(lo[pos])
        lb = _log_tail(hi[pos])
        out[pos] = la + np.log1p(-np.exp(lb - la))
    if np.any(neg):
        la = _log_tail(-lo[neg])
        lb = _log_tail(-hi[neg])
        out[neg] = lb + np.log1p(-np.exp(la - lb))
    if np.any(mid):
        pa = ndtr(lo[mid])
        pb = ndtr(-hi[mid])  # upper tail mass
        out[mid] = np.log1p(-pa - pb)
    return out


def trunc_std_mean(lo, hi) -> np.ndarray:
    """Mean of a standard normal truncated to (lo, hi), tail-stable."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    w = log_interval_prob(lo, hi)
    lo2 = np.where(np.isfinite(lo), lo, 0.0)
    hi2 = np.where(np.isfinite(hi), hi, 0.0)
    num_lo = np.where(np.isfinite(lo), np.exp(-0.5 * lo2 * lo2 - w), 0.0)
    num_hi = np.where(np.isfinite(hi), np.exp(-0.5 * hi2 * hi2 - w), 0.0)
    return (num_lo - num_hi) * _INV_SQRT2PI


# ---------------------------------------------------------------------------
# truncated standard-normal draws
# ---------------------------------------------------------------------------


def _tail_draw_scalar(rng: np.random.Generator, lo: float, hi: float) -> float:
    # right tail, 0 < TAIL_SWITCH <= lo < hi
    if np.isfinite(hi) and (hi - lo) * lo < 0.7:
        # narrow band: uniform proposal, bounded density ratio
        while True:
            t = rng.uniform(lo, hi)
            if math.log(rng.random()) <= -0.5 * (t * t - lo * lo):
                return t
    alpha = 0.5 * (lo + math.sqrt(lo * lo + 4.0))
    while True:
        t = lo + rng.exponential(1.0 / alpha)
        if t <= hi and math.log(rng.random()) <= -0.5 * (t - alpha) ** 2:
            return t


def _trunc_std_scalar(rng: np.random.Generator, lo: float, hi: float) -> float:
    """One draw of Z ~ N(0,1) restricted to [lo, hi]; lo < hi required."""
    if lo <= 0.7 and hi >= -0.7 and hi - lo >= 1.2:
        # interval keeps >= ~20% of the mass: plain rejection needs only a
        # handful of standard normals, cheaper than the inverse CDF
        for _ in range(64):
            x = rng.standard_normal()
            if lo <= x <= hi:
                return x
    if lo >= TAIL_SWITCH:
        return _tail_draw_scalar(rng, lo, hi)
    if hi <= -TAIL_SWITCH:
        return -_tail_draw_scalar(rng, -hi, -lo)
    pl = 0.5 * math.erfc(-lo / _SQRT2) if lo > -math.inf else 0.0
    pu = 0.5 * math.erfc(-hi / _SQRT2) if hi < math.inf else 1.0
    u = pl + (pu - pl) * rng.random()
    if u <= 0.0 or u >= 1.0:
        return min(max(0.0, lo), hi)
    x = float(ndtri(u))
    return min(max(x, lo), hi)


def trunc_std_batch(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Vectorized draws of Z ~ N(0,1) restricted to [lo_j, hi_j] per entry."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.empty(lo.shape)
    right = lo >= TAIL_SWITCH
    left = hi <= -TAIL_SWITCH
    mid = ~(right | left)
    if np.any(mid):
        pl = ndtr(lo[mid])
        pu = ndtr(hi[mid])
        u = pl + (pu - pl) * rng.random(int(mid.sum()))
        u = np.clip(u, 1e-320, 1.0 - 1e-16)
        x[mid] = ndtri(u)
    for mask, flip in ((right, False), (left, True)):
        if np.any(mask):
            a = -hi[mask] if flip else lo[mask]
            b = -lo[mask] if flip else hi[mask]
            draws = np.array([_tail_draw_scalar(rng, ai, bi) for ai, bi in zip(a, b)])
            x[mask] = -draws if flip else draws
    return np.minimum(np.maximum(x, lo), hi)


def sample_truncated_univariate(
    mu: float,
    sigma: float,
    lo: float,
    hi: float,
    rng: np.random.Generator,
) -> float:
    """Exact draw from N(mu, sigma^2) restricted to [lo, hi].

    Inverse-CDF in the central regime; exponential-proposal rejection once
    the interval sits at least ``TAIL_SWITCH`` standard deviations into a
    tail.  Degenerate intervals (lo >= hi) are rejected outright.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    return mu + sigma * _trunc_std_scalar(rng, a, b)
