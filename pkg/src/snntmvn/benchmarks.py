"""Exact-up-to-MCMC reference ensembles for fidelity experiments.

The reference path materializes the dense conditional Gaussian of the
censored block given the observed values and samples the resulting truncated
normal with the Gibbs oracle, one independent chain per ensemble member,
started from an overdispersed draw of the untruncated conditional.  Feasible
up to a few thousand censored sites; used to calibrate the scalable sampler.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

from .censored import CensoredDataset
from .gaussian import cholesky_with_jitter
from .kernels import CovarianceModel, covariance_block
from .lowdim import LowDimTarget, sample_gibbs_oracle
from .rng import substream


def dense_conditional(
    data: CensoredDataset, model: CovarianceModel
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the censored block given observed values."""
    obs = data.observed_idx
    cen = data.censored_idx
    if cen.size == 0:
        raise ValueError("dataset has no censored sites")
    sig_cc = covariance_block(model, data.locations, cen, cen)
    if obs.size == 0:
        return np.zeros(cen.size), sig_cc
    sig_oo = covariance_block(model, data.locations, obs, obs)
    sig_oc = covariance_block(model, data.locations, obs, cen)
    lo, _ = cholesky_with_jitter(sig_oo)
    w = cho_solve((lo, True), sig_oc)
    mu = w.T @ data.values[obs]
    cond = sig_cc - sig_oc.T @ w
    return mu, 0.5 * (cond + cond.T)


def gibbs_benchmark(
    data: CensoredDataset,
    model: CovarianceModel,
    count: int,
    burnin: int,
    seed: int,
) -> np.ndarray:
    """Independent-chain Gibbs ensemble at the censored sites, (count, n_c).

    Each member is the endpoint of its own chain after ``burnin`` systematic
    sweeps, so members are mutually independent; starts are draws from the
    untruncated conditional clipped into the censoring box.
    """
    mu, cond = dense_conditional(data, model)
    cen = data.censored_idx
    lower = data.lower[cen] - mu
    upper = data.upper[cen] - mu
    target = LowDimTarget.from_cov(lower, upper, cond)
    chol = target.chol
    q = cen.size
    out = np.empty((count, q))
    eps = 1e-9
    for k in range(count):
        rng = substream(seed, k)
        start = chol @ rng.standard_normal(q)
        start = np.minimum(np.maximum(start, lower + eps), upper - eps)
        out[k] = sample_gibbs_oracle(target, rng, burnin=burnin, thin=1, count=1, start=start)[0]
    return out + mu
