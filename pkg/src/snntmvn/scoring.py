"""Scores and distributional diagnostics for sample ensembles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp


@dataclass(frozen=True)
class ScoreReport:
    rmse: float
    crps: float
    n_eval: int
    rmse_per_coordinate: np.ndarray | None = None
    crps_per_coordinate: np.ndarray | None = None


def _as_matrix(ensemble) -> np.ndarray:
    samples = getattr(ensemble, "samples", ensemble)
    return np.atleast_2d(np.asarray(samples, dtype=float))


def rmse(ensemble, truth, eval_indices=None) -> float:
    """Root-mean-square error of the ensemble posterior mean against truth."""
    mat = _as_matrix(ensemble)
    truth = np.asarray(truth, dtype=float)
    if eval_indices is not None:
        eval_indices = np.asarray(eval_indices, dtype=int)
        mat = mat[:, eval_indices]
        truth = truth[eval_indices]
    if mat.shape[1] == 0:
        raise ValueError("empty evaluation set")
    err = mat.mean(axis=0) - truth
    return float(np.sqrt(np.mean(err**2)))


def crps_ensemble(samples, truth: float) -> float:
    """Empirical-CDF CRPS of a scalar ensemble against a scalar truth.

    mean_k |x_k - y|  -  (1 / (2 M^2)) sum_kj |x_k - x_j|
    """
    x = np.sort(np.asarray(samples, dtype=float))
    m = x.size
    if m == 0:
        raise ValueError("empty ensemble")
    term1 = float(np.mean(np.abs(x - truth)))
    # sum_{k,j} |x_k - x_j| = 2 * sum_i (2i - m + 1) x_(i) over sorted values
    i = np.arange(m)
    pair_sum = 2.0 * float(np.sum((2 * i - m + 1) * x))
    return term1 - pair_sum / (2.0 * m * m)


def score_ensemble(ensemble, truth, eval_indices=None) -> ScoreReport:
    """RMSE plus per-site CRPS averaged over the evaluation coordinates."""
    mat = _as_matrix(ensemble)
    truth = np.asarray(truth, dtype=float)
    if eval_indices is not None:
        eval_indices = np.asarray(eval_indices, dtype=int)
        mat = mat[:, eval_indices]
        truth = truth[eval_indices]
    if mat.shape[1] == 0:
        raise ValueError("empty evaluation set")
    err = mat.mean(axis=0) - truth
    rmse_pc = np.abs(err)
    crps_pc = np.array([crps_ensemble(mat[:, j], truth[j]) for j in range(mat.shape[1])])
    return ScoreReport(
        rmse=float(np.sqrt(np.mean(err**2))),
        crps=float(np.mean(crps_pc)),
        n_eval=mat.shape[1],
        rmse_per_coordinate=rmse_pc,
        crps_per_coordinate=crps_pc,
    )


def qq_data(samples_a, samples_b) -> np.ndarray:
    """Paired quantiles of two samples, interpolated to the shorter length.

    Returns an array of shape (K, 2); identical inputs land on the
    diagonal.
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    k = min(a.size, b.size)
    probs = (np.arange(k) + 0.5) / k
    qa = np.quantile(a, probs)
    qb = np.quantile(b, probs)
    return np.column_stack([qa, qb])


def ks_statistic(samples_a, samples_b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    res = ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)
