"""Locations, distance metrics, spatial orderings, and nearest-neighbor search.

Coordinates are stored as an ``(n, 2)`` float array whose columns are
``(x, y)`` on the plane or ``(lon, lat)`` in degrees on the sphere.  The
conditioning-set search is an exact brute-force scan over admissible
candidates, compiled with numba so the quadratic pass stays affordable at
bench sizes; ties in distance are broken by the smaller ordered index,
which makes every downstream likelihood reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import parallel

EARTH_RADIUS_KM = 6371.0

# Fixed block size for the neighbor scan; results do not depend on it.
_TARGET_BLOCK = 4096

_MORTON_BITS = 16


@dataclass(frozen=True)
class Euclidean:
    """Plane metric for unit-square style coordinates."""

    name = "euclidean"


@dataclass(frozen=True)
class GreatCircle:
    """Haversine great-circle metric on a sphere of the given radius.

    Coordinates are ``(lon, lat)`` in degrees; distances come out in the
    radius' length unit (kilometers by default).
    """

    radius: float = EARTH_RADIUS_KM
    name = "gcd"

    def __post_init__(self):
        if not (self.radius > 0.0):
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


Metric = Euclidean | GreatCircle


def _check_latitudes(lat) -> None:
    lat = np.asarray(lat, dtype=np.float64)
    if np.any(np.abs(lat) > 90.0):
        bad = float(lat.flat[int(np.argmax(np.abs(lat) > 90.0))])
        raise ValueError(f"latitude {bad} outside [-90, 90]")


def euclidean_distance(a, b) -> float:
    """Plane distance between two (x, y) points."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("coordinates must be finite")
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def _haversine(lon1, lat1, lon2, lat2, radius):
    # hav(d/r) = hav(lat2-lat1) + cos(lat1) cos(lat2) hav(lon2-lon1),
    # hav(t) = sin^2(t/2); inputs in degrees.
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    l1 = np.radians(lon1)
    l2 = np.radians(lon2)
    h = np.sin((p2 - p1) / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin((l2 - l1) / 2.0) ** 2
    # round-off can push h a hair past 1 for near-antipodal pairs
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def great_circle_distance(a, b, radius: float = EARTH_RADIUS_KM) -> float:
    """Great-circle distance between two (lon, lat) points in degrees."""
    if not (radius > 0.0):
        raise ValueError(f"sphere radius must be positive, got {radius}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_latitudes([a[1], b[1]])
    return float(_haversine(a[0], a[1], b[0], b[1], radius))


def pairwise_distance(a, b, metric: Metric) -> np.ndarray:
    """Distance between broadcastable coordinate arrays shaped (..., 2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if isinstance(metric, GreatCircle):
        return _haversine(a[..., 0], a[..., 1], b[..., 0], b[..., 1], metric.radius)
    return np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])


def distance_matrix(locs_a, locs_b, metric: Metric) -> np.ndarray:
    """Dense (na, nb) distance matrix, row-blocked to bound temporaries."""
    locs_a = np.asarray(locs_a, dtype=np.float64)
    locs_b = np.asarray(locs_b, dtype=np.float64)
    na, nb = locs_a.shape[0], locs_b.shape[0]
    out = np.empty((na, nb))
    rows = max(1, (1 << 22) // max(nb, 1))
    for lo in range(0, na, rows):
        hi = min(lo + rows, na)
        out[lo:hi] = pairwise_distance(locs_a[lo:hi, None, :], locs_b[None, :, :], metric)
    return out


@dataclass
class Dataset:
    """Locations plus one scalar observation each, under a fixed metric."""

    locations: np.ndarray
    observations: np.ndarray
    metric: Metric = field(default_factory=Euclidean)

    def __post_init__(self):
        self.locations = np.ascontiguousarray(self.locations, dtype=np.float64)
        self.observations = np.ascontiguousarray(self.observations, dtype=np.float64)
        if self.locations.ndim != 2 or self.locations.shape[1] != 2:
            raise ValueError(f"locations must have shape (n, 2), got {self.locations.shape}")
        n = self.locations.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one location")
        if self.observations.shape != (n,):
            raise ValueError(
                f"observations shape {self.observations.shape} does not match {n} locations"
            )
        if not np.all(np.isfinite(self.locations)):
            raise ValueError("locations must be finite")
        if not np.all(np.isfinite(self.observations)):
            raise ValueError("observations must be finite")
        if isinstance(self.metric, GreatCircle):
            _check_latitudes(self.locations[:, 1])

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    def permute(self, perm: "Permutation") -> "Dataset":
        """Dataset reordered so new position i holds original index order[i]."""
        if perm.n != self.n:
            raise ValueError(f"permutation length {perm.n} does not match n={self.n}")
        return Dataset(self.locations[perm.order], self.observations[perm.order], self.metric)


@dataclass
class Permutation:
    """Bijection over location indices; order[new_position] = original index."""

    order: np.ndarray

    def __post_init__(self):
        self.order = np.ascontiguousarray(self.order, dtype=np.int64)
        if self.order.ndim != 1:
            raise ValueError("permutation order must be one-dimensional")
        n = self.order.shape[0]
        if not np.array_equal(np.sort(self.order), np.arange(n)):
            raise ValueError("order is not a bijection on {0, ..., n-1}")

    @property
    def n(self) -> int:
        return self.order.shape[0]


@dataclass
class NeighborTable:
    """Per ordered target i (i = m..n-1, zero-based), its m nearest predecessors.

    Row r of ``neighbors`` belongs to ordered index ``m + r``; entries are
    ordered indices strictly below the target, sorted by increasing
    distance with ties broken by the smaller index.
    """

    m: int
    neighbors: np.ndarray

    def __post_init__(self):
        self.neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.neighbors.shape[0] + self.m


def random_ordering(n: int, seed: int) -> Permutation:
    """Seeded uniformly random permutation (numpy PCG64 generator)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return Permutation(rng.permutation(n))


def _part1by1(v: np.ndarray) -> np.ndarray:
    # Spread the low 16 bits of each entry onto the even bit positions.
    v = v.astype(np.uint64) & np.uint64(0x0000FFFF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x00FF00FF)
    v = (v | (v << np.uint64(4))) & np.uint64(0x0F0F0F0F)
    v = (v | (v << np.uint64(2))) & np.uint64(0x33333333)
    v = (v | (v << np.uint64(1))) & np.uint64(0x55555555)
    return v


def morton_codes(locations) -> np.ndarray:
    """32-bit Z-order codes: 16 bits per axis over the bounding box, x low."""
    locs = np.asarray(locations, dtype=np.float64)
    if locs.ndim != 2 or locs.shape[1] != 2:
        raise ValueError(f"locations must have shape (n, 2), got {locs.shape}")
    if not np.all(np.isfinite(locs)):
        raise ValueError("locations must be finite")
    top = np.float64((1 << _MORTON_BITS) - 1)
    quant = np.empty(locs.shape, dtype=np.uint64)
    for axis in range(2):
        lo = locs[:, axis].min()
        span = locs[:, axis].max() - lo
        if span == 0.0:
            quant[:, axis] = 0  # degenerate axis: everything maps to cell 0
        else:
            quant[:, axis] = np.rint((locs[:, axis] - lo) / span * top).astype(np.uint64)
    return _part1by1(quant[:, 0]) | (_part1by1(quant[:, 1]) << np.uint64(1))


def morton_ordering(locations) -> Permutation:
    """Sort locations along the Z-order curve; code ties keep input order."""
    codes = morton_codes(locations)
    return Permutation(np.argsort(codes, kind="stable"))


@njit(cache=True, nogil=True)
def _topm_plane(qx, qy, dx_all, dy_all, limits, m, out):
    # Single pass over the admissible prefix per query, keeping the m
    # smallest squared distances in a small insertion-sorted array.  A
    # candidate tying the current worst loses (its index is larger, since
    # candidates arrive in ascending index order); among kept equal keys
    # the insertion stops at the first non-greater key, so smaller indices
    # stay in front.
    keys = np.empty(m)
    for t in range(qx.shape[0]):
        xt = qx[t]
        yt = qy[t]
        cnt = 0
        for j in range(limits[t]):
            dx = dx_all[j] - xt
            dy = dy_all[j] - yt
            k = dx * dx + dy * dy
            if cnt == m:
                if k >= keys[m - 1]:
                    continue
                p = m - 1
            else:
                p = cnt
                cnt += 1
            while p > 0 and keys[p - 1] > k:
                keys[p] = keys[p - 1]
                out[t, p] = out[t, p - 1]
                p -= 1
            keys[p] = k
            out[t, p] = j


@njit(cache=True, nogil=True)
def _topm_sphere(qlam, qphi, qcos, dlam, dphi, dcos, limits, m, out):
    # Same scan with the haversine of the central angle as the key
    # (strictly increasing in great-circle distance on [0, pi]).
    keys = np.empty(m)
    for t in range(qlam.shape[0]):
        lam_t = qlam[t]
        phi_t = qphi[t]
        cos_t = qcos[t]
        cnt = 0
        for j in range(limits[t]):
            sp = np.sin((dphi[j] - phi_t) * 0.5)
            sl = np.sin((dlam[j] - lam_t) * 0.5)
            k = sp * sp + cos_t * dcos[j] * sl * sl
            if cnt == m:
                if k >= keys[m - 1]:
                    continue
                p = m - 1
            else:
                p = cnt
                cnt += 1
            while p > 0 and keys[p - 1] > k:
                keys[p] = keys[p - 1]
                out[t, p] = out[t, p - 1]
                p -= 1
            keys[p] = k
            out[t, p] = j


def _topm_scan(query_locs, data_locs, metric, m, limits) -> np.ndarray:
    """Exact top-m of data indices below ``limits[t]`` for each query row.

    Returns (n_query, m) indices sorted by (distance, index).  Work is
    blocked over queries; blocks may run on the worker pool (the compiled
    kernels drop the GIL) and each writes a disjoint output slice.
    """
    nq = query_locs.shape[0]
    out = np.empty((nq, m), dtype=np.int64)
    if isinstance(metric, GreatCircle):
        qlam = np.radians(query_locs[:, 0])
        qphi = np.radians(query_locs[:, 1])
        dlam = np.radians(data_locs[:, 0])
        dphi = np.radians(data_locs[:, 1])
        qcos = np.cos(qphi)
        dcos = np.cos(dphi)

        def block(lo, hi):
            _topm_sphere(
                qlam[lo:hi], qphi[lo:hi], qcos[lo:hi],
                dlam, dphi, dcos, limits[lo:hi], m, out[lo:hi],
            )

    else:
        qx = np.ascontiguousarray(query_locs[:, 0])
        qy = np.ascontiguousarray(query_locs[:, 1])
        dx_all = np.ascontiguousarray(data_locs[:, 0])
        dy_all = np.ascontiguousarray(data_locs[:, 1])

        def block(lo, hi):
            _topm_plane(qx[lo:hi], qy[lo:hi], dx_all, dy_all, limits[lo:hi], m, out[lo:hi])

    parallel.map_chunks(block, 0, nq, _TARGET_BLOCK)
    return out


def nearest_neighbors(ordered_dataset: Dataset, m: int) -> NeighborTable:
    """Exact m nearest predecessors for every ordered index i >= m.

    The dataset must already be in likelihood order.  Each target i scans
    exactly its predecessors 0..i-1.
    """
    n = ordered_dataset.n
    if m < 1:
        raise ValueError(f"conditioning size must be >= 1, got {m}")
    if n <= m:
        raise ValueError(f"need n > m, got n={n}, m={m}")
    limits = np.arange(m, n, dtype=np.int64)  # target i admits indices < i
    table = _topm_scan(
        ordered_dataset.locations[m:], ordered_dataset.locations,
        ordered_dataset.metric, m, limits,
    )
    return NeighborTable(m=m, neighbors=table)


def nearest_points(query_locs, data_locs, metric: Metric, m: int) -> np.ndarray:
    """Unrestricted m nearest data points per query row (used by kriging)."""
    query_locs = np.ascontiguousarray(query_locs, dtype=np.float64)
    data_locs = np.ascontiguousarray(data_locs, dtype=np.float64)
    nd = data_locs.shape[0]
    if m < 1 or m > nd:
        raise ValueError(f"need 1 <= m <= {nd}, got {m}")
    limits = np.full(query_locs.shape[0], nd, dtype=np.int64)
    return _topm_scan(query_locs, data_locs, metric, m, limits)
