"""Matern covariance kernels, distance metrics, and covariance blocks.

Covariance matrices are never materialized globally; everything goes through
:func:`covariance_block`, which evaluates the kernel on arbitrary row/column
index subsets.  This is what keeps the sequential sampler linear in the
problem dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SUPPORTED_SMOOTHNESS = (0.5, 1.5, 2.5)
METRICS = ("euclidean", "chordal")

# Row-chunk cap for pairwise distance blocks, keeps peak memory bounded.
_MAX_BLOCK_ELEMENTS = 8_000_000


class UnsupportedSmoothnessError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary Matern covariance with per-dimension ranges and a nugget.

    The covariance between inputs ``s`` and ``t`` is ``variance * g(u)``
    where ``u`` is the Euclidean norm of the coordinate differences after
    dividing each coordinate by its range, and ``g`` is the Matern
    correlation in closed form:

    ==========  ================================
    smoothness  g(u)
    ==========  ================================
    0.5         exp(-u)
    1.5         (1 + u) exp(-u)
    2.5         (1 + u + u^2/3) exp(-u)
    ==========  ================================

    Range convention: the scaled distance is ``d / range`` directly, with no
    ``sqrt(2 * smoothness)`` prefactor.  Libraries using the other
    convention must rescale their ranges before comparing values.

    The nugget is added to same-index (diagonal) matrix entries only; two
    distinct indices at coincident locations do not share it.
    """

    variance: float
    ranges: tuple[float, ...]
    smoothness: float = 1.5
    nugget: float = 0.0

    def __init__(
        self,
        variance: float,
        ranges: float | Sequence[float],
        smoothness: float = 1.5,
        nugget: float = 0.0,
    ):
        if np.isscalar(ranges):
            ranges_t = (float(ranges),)
        else:
            ranges_t = tuple(float(r) for r in ranges)
        if variance <= 0:
            raise ValueError(f"variance must be positive, got {variance}")
        if not ranges_t or any(r <= 0 for r in ranges_t):
            raise ValueError(f"all ranges must be positive, got {ranges_t}")
        if nugget < 0:
            raise ValueError(f"nugget must be nonnegative, got {nugget}")
        if smoothness not in SUPPORTED_SMOOTHNESS:
            raise UnsupportedSmoothnessError(
                f"smoothness must be one of {SUPPORTED_SMOOTHNESS}, got {smoothness}"
            )
        object.__setattr__(self, "variance", float(variance))
        object.__setattr__(self, "ranges", ranges_t)
        object.__setattr__(self, "smoothness", float(smoothness))
        object.__setattr__(self, "nugget", float(nugget))


@dataclass(frozen=True)
class LocationSet:
    """Input locations with the metric used for distances between them.

    ``points`` is an ``(n, d)`` array.  The chordal metric requires ``d == 2``
    with coordinates read as (longitude, latitude) in degrees; points are
    mapped onto the unit sphere and distances are straight lines through it.
    """

    points: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError("points must form an (n, d) array with d >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.metric == "chordal" and pts.shape[1] != 2:
            raise ValueError("chordal metric requires 2-d (lon, lat) coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def effective_coords(self) -> np.ndarray:
        """Coordinates in the space where the metric is plain Euclidean."""
        if self.metric == "chordal":
            return _sphere_embed(self.points)
        return self.points

    def subset(self, indices) -> "LocationSet":
        return LocationSet(self.points[np.asarray(indices, dtype=int)], self.metric)


def _sphere_embed(lonlat_deg: np.ndarray) -> np.ndarray:
    lon = np.radians(lonlat_deg[..., 0])
    lat = np.radians(lonlat_deg[..., 1])
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def distance(s, t, metric: str = "euclidean") -> float:
    """Distance between two coordinate vectors under the given metric."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape != t.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
    if metric == "euclidean":
        return float(np.sqrt(np.sum((s - t) ** 2)))
    if metric == "chordal":
        if s.shape[-1] != 2:
            raise ValueError("chordal metric requires 2-d (lon, lat) coordinates")
        return float(np.sqrt(np.sum((_sphere_embed(s) - _sphere_embed(t)) ** 2)))
    raise ValueError(f"unknown metric {metric!r}")


def matern_correlation(u: np.ndarray, smoothness: float) -> np.ndarray:
    """Matern correlation g(u) at scaled distance u >= 0."""
    u = np.asarray(u, dtype=float)
    if smoothness == 0.5:
        return np.exp(-u)
    if smoothness == 1.5:
        return (1.0 + u) * np.exp(-u)
    if smoothness == 2.5:
        return (1.0 + u + u * u / 3.0) * np.exp(-u)
    raise UnsupportedSmoothnessError(
        f"smoothness must be one of {SUPPORTED_SMOOTHNESS}, got {smoothness}"
    )


def _scaled_coords(model: CovarianceModel, locations: LocationSet) -> np.ndarray:
    """Coordinates scaled so the kernel is isotropic with unit range."""
    if locations.metric == "chordal":
        if len(model.ranges) != 1:
            raise ValueError("chordal metric supports a single isotropic range")
        return _sphere_embed(locations.points) / model.ranges[0]
    pts = locations.points
    ranges = np.asarray(model.ranges, dtype=float)
    if ranges.size == 1:
        return pts / ranges[0]
    if ranges.size != locations.dim:
        raise ValueError(
            f"got {ranges.size} ranges for {locations.dim}-dimensional locations"
        )
    return pts / ranges


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact pairwise Euclidean distances, bitwise-symmetric when a is b."""
    n, d = a.shape
    m = b.shape[0]
    out = np.empty((n, m))
    chunk = max(1, _MAX_BLOCK_ELEMENTS // max(1, m * d))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = a[start:stop, None, :] - b[None, :, :]
        out[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def kernel_value(model: CovarianceModel, s, t, same_index: bool = False) -> float:
    """Covariance between single inputs s and t; nugget only if same_index."""
    # anisotropy: scale each coordinate difference by its range
    loc = LocationSet(np.vstack([np.atleast_1d(s), np.atleast_1d(t)]), "euclidean")
    sc = _scaled_coords(model, loc)
    u = float(np.sqrt(np.sum((sc[0] - sc[1]) ** 2)))
    val = model.variance * float(matern_correlation(u, model.smoothness))
    if same_index:
        val += model.nugget
    return val


def covariance_block(
    model: CovarianceModel,
    locations: LocationSet,
    rows,
    cols,
) -> np.ndarray:
    """Covariance matrix block Sigma[rows, cols].

    Entry (r, c) is the kernel between locations rows[r] and cols[c], with the
    nugget added exactly where the two index values coincide.  When
    ``rows == cols`` the result is symmetric by construction and positive
    definite for positive nugget.
    """
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    n = locations.n
    for idx in (rows, cols):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"index out of range for {n} locations")
    sc = _scaled_coords(model, locations)
    u = _pairwise_distances(sc[rows], sc[cols])
    block = model.variance * matern_correlation(u, model.smoothness)
    if model.nugget > 0.0:
        block[rows[:, None] == cols[None, :]] += model.nugget
    return block


def cross_covariance(
    model: CovarianceModel,
    locations_a: LocationSet,
    locations_b: LocationSet,
) -> np.ndarray:
    """Covariance between two distinct location sets (no nugget anywhere)."""
    if locations_a.metric != locations_b.metric:
        raise ValueError("location sets must share a metric")
    sa = _scaled_coords(model, locations_a)
    sb = _scaled_coords(model, locations_b)
    u = _pairwise_distances(sa, sb)
    return model.variance * matern_correlation(u, model.smoothness)


class KernelCovariance:
    """Covariance source backed by a kernel and a location set."""

    def __init__(self, model: CovarianceModel, locations: LocationSet):
        self.model = model
        self.locations = locations
        self.n = locations.n

    def block(self, rows, cols) -> np.ndarray:
        return covariance_block(self.model, self.locations, rows, cols)

    def permuted(self, permutation: np.ndarray) -> "KernelCovariance":
        return KernelCovariance(self.model, self.locations.subset(permutation))


class MatrixCovariance:
    """Covariance source backed by an explicit dense matrix."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("covariance matrix must be square")
        if not np.allclose(matrix, matrix.T):
            raise ValueError("covariance matrix must be symmetric")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("covariance matrix must be finite")
        self.matrix = matrix
        self.n = matrix.shape[0]

    def block(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        return self.matrix[np.ix_(rows, cols)]

    def permuted(self, permutation: np.ndarray) -> "MatrixCovariance":
        p = np.asarray(permutation, dtype=int)
        return MatrixCovariance(self.matrix[np.ix_(p, p)])
