"""Location orderings and nearest-neighbor conditioning sets.

The sequential sampler visits coordinates in a chosen order and conditions
each one on its ``m`` nearest locations.  Neighbors are searched over *all*
locations, not only previously ordered ones; later-ordered neighbors enter
the conditioning through their interval constraints rather than their values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .kernels import LocationSet

ORDERING_KINDS = ("coordinate", "random", "maximin", "given")
NEIGHBOR_POLICIES = ("all", "split-obs-cens")

# Extra candidates fetched per k-NN query so that exact-distance ties can be
# resolved by smallest index without a second tree pass.
_TIE_PAD = 16


@dataclass(frozen=True)
class Ordering:
    """A permutation of {0..n-1} mapping ordered position -> original index."""

    permutation: np.ndarray
    kind: str

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=int)
        n = perm.size
        if not np.array_equal(np.sort(perm), np.arange(n)):
            raise ValueError("permutation must be a bijection on 0..n-1")
        if self.kind not in ORDERING_KINDS:
            raise ValueError(f"kind must be one of {ORDERING_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "permutation", perm)

    @property
    def n(self) -> int:
        return self.permutation.size

    def inverse(self) -> np.ndarray:
        """Original index -> ordered position."""
        inv = np.empty(self.n, dtype=int)
        inv[self.permutation] = np.arange(self.n)
        return inv


@dataclass(frozen=True)
class NeighborPlan:
    """Per-position conditioning sets, in ordered-position indexing.

    For each position ``i``:

    * ``past[i]``  -- neighbors ordered before i, sorted ascending,
    * ``later[i]`` -- i itself (always first) followed by neighbors ordered
      at or after i, sorted ascending.

    Together they form the ``min(m, n)`` nearest locations to position i.
    """

    past: tuple[np.ndarray, ...]
    later: tuple[np.ndarray, ...]
    m: int

    @property
    def n(self) -> int:
        return len(self.later)

    def neighbors(self, i: int) -> np.ndarray:
        return np.concatenate([self.later[i][:1], self.past[i], self.later[i][1:]])


def order_coordinate(locations: LocationSet) -> Ordering:
    """Lexicographic ordering: coordinate 1 primary, then 2, ...; stable."""
    pts = locations.points
    n = pts.shape[0]
    keys = tuple(pts[:, k] for k in reversed(range(pts.shape[1])))
    perm = np.lexsort((np.arange(n),) + keys)
    return Ordering(perm, "coordinate")


def order_random(locations: LocationSet, seed: int) -> Ordering:
    perm = np.random.default_rng(seed).permutation(locations.n)
    return Ordering(perm, "random")


def order_maximin(locations: LocationSet) -> Ordering:
    """Greedy max-min-distance ordering.

    The first point is the one nearest the coordinate-wise centroid; each
    subsequent point maximizes its minimum distance to all points already
    ordered.  Ties break on the smallest original index, so the result is
    fully deterministic.  O(n^2) with an incremental min-distance array.
    """
    pts = locations.effective_coords()
    n = pts.shape[0]
    if n == 0:
        raise ValueError("cannot order an empty location set")
    centroid = pts.mean(axis=0)
    d2 = np.sum((pts - centroid) ** 2, axis=1)
    first = int(np.argmin(d2))  # argmin takes the smallest index on ties
    perm = np.empty(n, dtype=int)
    perm[0] = first
    mind = np.sum((pts - pts[first]) ** 2, axis=1)
    mind[first] = -np.inf
    for step in range(1, n):
        j = int(np.argmax(mind))  # argmax takes the smallest index on ties
        perm[step] = j
        np.minimum(mind, np.sum((pts - pts[j]) ** 2, axis=1), out=mind)
        mind[j] = -np.inf
    return Ordering(perm, "maximin")


def make_ordering(
    locations: LocationSet,
    kind: str,
    seed: int = 0,
    given: np.ndarray | None = None,
) -> Ordering:
    """Dispatch on ordering kind; ``given`` supplies an explicit permutation."""
    if kind == "coordinate":
        return order_coordinate(locations)
    if kind == "random":
        return order_random(locations, seed)
    if kind == "maximin":
        return order_maximin(locations)
    if kind == "given":
        if given is None:
            raise ValueError("kind 'given' requires an explicit permutation")
        return Ordering(np.asarray(given, dtype=int), "given")
    raise ValueError(f"unknown ordering kind {kind!r}")


class KnnIndex:
    """Exact k-nearest-neighbor queries with deterministic tie-breaking.

    Backed by a k-d tree; candidates tied on distance are returned in
    ascending index order, matching a brute-force scan sorted by
    (distance, index).
    """

    def __init__(self, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[0] == 0:
            raise ValueError("empty location set")
        self.points = points
        self._tree = cKDTree(points)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def _brute(self, query: np.ndarray, k: int) -> np.ndarray:
        d = np.sqrt(np.sum((self.points - query) ** 2, axis=1))
        order = np.lexsort((np.arange(self.n), d))
        return order[:k]

    def query(self, query, k: int) -> np.ndarray:
        """Indices of the k nearest stored points, distance-ascending."""
        query = np.asarray(query, dtype=float)
        if k < 1 or k > self.n:
            raise ValueError(f"k must be in [1, {self.n}], got {k}")
        kq = min(self.n, k + _TIE_PAD)
        d, idx = self._tree.query(query, k=kq)
        d = np.atleast_1d(d)
        idx = np.atleast_1d(idx)
        order = np.lexsort((idx, d))
        d, idx = d[order], idx[order]
        # if the padded window ends inside a tie ring, fall back to full scan
        if kq > k and d[k - 1] == d[-1]:
            return self._brute(query, k)
        return idx[:k]

    def query_self_all(self, k: int) -> np.ndarray:
        """k nearest neighbors of every stored point, shape (n, k)."""
        if k < 1 or k > self.n:
            raise ValueError(f"k must be in [1, {self.n}], got {k}")
        kq = min(self.n, k + _TIE_PAD)
        d, idx = self._tree.query(self.points, k=kq)
        if kq == 1:
            d, idx = d[:, None], idx[:, None]
        rows = np.repeat(np.arange(self.n), kq)
        order = np.lexsort((idx.ravel(), d.ravel(), rows)).reshape(self.n, kq)
        order -= np.arange(self.n)[:, None] * kq
        d = np.take_along_axis(d, order, axis=1)
        idx = np.take_along_axis(idx, order, axis=1)
        if kq > k:
            unresolved = np.nonzero(d[:, k - 1] == d[:, -1])[0]
            for r in unresolved:
                idx[r, :k] = self._brute(self.points[r], k)
        return idx[:, :k]


def knn_query(index: KnnIndex, query, k: int) -> np.ndarray:
    """Functional wrapper over :meth:`KnnIndex.query`."""
    return index.query(query, k)


def _split_past_later(i: int, neighbors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    others = neighbors[neighbors != i]
    past = np.sort(others[others < i])
    later_rest = np.sort(others[others > i])
    later = np.concatenate([[i], later_rest])
    return past, later


def build_neighbor_plan(
    locations_in_order: LocationSet,
    m: int,
    pool_labels: np.ndarray | None = None,
) -> NeighborPlan:
    """Neighbor sets for locations already permuted into sampling order.

    Each position's set contains itself plus its ``m - 1`` nearest other
    locations, searched over all n points.  With ``pool_labels`` (boolean,
    True marking the first pool) the budget is split: ``m // 2`` nearest
    neighbors from the True pool and the rest from the False pool, topping up
    from the other pool when one is too small.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    pts = locations_in_order.effective_coords()
    n = pts.shape[0]
    k = min(m, n)

    if pool_labels is None:
        neighbor_rows = KnnIndex(pts).query_self_all(k)
    else:
        pool_labels = np.asarray(pool_labels, dtype=bool)
        if pool_labels.size != n:
            raise ValueError("pool_labels length must match the location count")
        neighbor_rows = _split_pool_neighbors(pts, pool_labels, k)

    past: list[np.ndarray] = []
    later: list[np.ndarray] = []
    for i in range(n):
        row = neighbor_rows[i]
        if i not in row:
            # can happen only under coincident-point ties; self always belongs
            row = np.concatenate([[i], row[:-1]])
        p, l = _split_past_later(i, row)
        past.append(p)
        later.append(l)
    return NeighborPlan(tuple(past), tuple(later), m)


def _split_pool_neighbors(pts: np.ndarray, labels: np.ndarray, k: int) -> list[np.ndarray]:
    idx_a = np.nonzero(labels)[0]
    idx_b = np.nonzero(~labels)[0]
    index_a = KnnIndex(pts[idx_a]) if idx_a.size else None
    index_b = KnnIndex(pts[idx_b]) if idx_b.size else None
    half = k // 2
    rows = []
    for i in range(pts.shape[0]):
        want_a = min(half, idx_a.size)
        want_b = min(k - want_a, idx_b.size)
        want_a = min(k - want_b, idx_a.size)  # top up if the B pool is small
        parts = []
        if want_a:
            parts.append(idx_a[index_a.query(pts[i], want_a)])
        if want_b:
            parts.append(idx_b[index_b.query(pts[i], want_b)])
        row = np.concatenate(parts) if parts else np.empty(0, dtype=int)
        if i not in row:
            row = np.concatenate([[i], row[:-1]])
        rows.append(row)
    return rows
