"""Finite metric spaces and nearest-facility queries.

A point descriptor is either a plain ``int`` (a point id) or a sorted tuple of
ints (a subset point of :class:`SubsetPointsMetric`). Every descriptor has a
place in one fixed total order, given by :func:`descriptor_key`: point ids by
index first, then subset points by their index tuple. Ties are always broken
toward the smaller key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

Descriptor = Union[int, tuple]

INF = math.inf
METRIC_TOL = 1e-9


class DescriptorError(IndexError):
    """A point descriptor is not valid for the metric space it was used with."""


def descriptor_key(d: Descriptor) -> tuple:
    if isinstance(d, tuple):
        return (1, d)
    return (0, (int(d),))


def sort_descriptors(ds: Iterable[Descriptor]) -> tuple:
    return tuple(sorted(ds, key=descriptor_key))


class MetricSpace:
    """Common interface. Subclasses are immutable after construction."""

    kind = "abstract"

    def distance(self, a: Descriptor, b: Descriptor) -> float:
        raise NotImplementedError

    def check(self, d: Descriptor) -> Descriptor:
        raise NotImplementedError

    def points(self) -> Iterator[Descriptor]:
        """Enumerate every point. Exponential for subset-point spaces."""
        raise NotImplementedError

    @property
    def n_points(self) -> int:
        raise NotImplementedError

    def submatrix(self, ds: Sequence[Descriptor]) -> np.ndarray:
        ds = [self.check(d) for d in ds]
        n = len(ds)
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = self.distance(ds[i], ds[j])
        return out

    def to_explicit(self) -> "ExplicitMetric":
        pts = list(self.points())
        return ExplicitMetric(self.submatrix(pts))


class ExplicitMetric(MetricSpace):
    kind = "explicit"

    def __init__(self, dist):
        dist = np.array(dist, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {dist.shape}")
        dist.setflags(write=False)
        self.dist = dist

    @property
    def n_points(self) -> int:
        return self.dist.shape[0]

    def check(self, d):
        if isinstance(d, tuple) or not 0 <= int(d) < self.n_points:
            raise DescriptorError(f"descriptor {d!r} out of range for {self.n_points}-point space")
        return int(d)

    def distance(self, a, b):
        return float(self.dist[self.check(a), self.check(b)])

    def points(self):
        return iter(range(self.n_points))

    def submatrix(self, ds):
        idx = np.array([self.check(d) for d in ds], dtype=np.intp)
        return self.dist[np.ix_(idx, idx)].copy()

    def to_explicit(self):
        return self

    def __eq__(self, other):
        return isinstance(other, ExplicitMetric) and np.array_equal(self.dist, other.dist)

    def __repr__(self):
        return f"ExplicitMetric(n={self.n_points})"


class EuclideanMetric(MetricSpace):
    kind = "euclidean"

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be a list of equal-length coordinate vectors")
        pts.setflags(write=False)
        self.coords = pts

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    def check(self, d):
        if isinstance(d, tuple) or not 0 <= int(d) < self.n_points:
            raise DescriptorError(f"descriptor {d!r} out of range for {self.n_points}-point space")
        return int(d)

    def distance(self, a, b):
        diff = self.coords[self.check(a)] - self.coords[self.check(b)]
        return float(np.sqrt(np.sum(diff * diff)))

    def points(self):
        return iter(range(self.n_points))

    def submatrix(self, ds):
        idx = np.array([self.check(d) for d in ds], dtype=np.intp)
        p = self.coords[idx]
        diff = p[:, None, :] - p[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def __eq__(self, other):
        return isinstance(other, EuclideanMetric) and np.array_equal(self.coords, other.coords)

    def __repr__(self):
        return f"EuclideanMetric(n={self.n_points}, dim={self.coords.shape[1]})"


class HubMetric(MetricSpace):
    """Star-graph metric: ``d(a, b) = w[a] + w[b]`` for ``a != b``.

    Each point hangs off an (unlisted) hub by an edge of length ``w[a]``. The
    star and clique families are both of this form, which keeps their
    nearest-facility query O(1) at any size.
    """

    kind = "hub"

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(w < 0):
            raise ValueError("hub weights must be non-negative")
        w.setflags(write=False)
        self.weights = w

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]

    def check(self, d):
        if isinstance(d, tuple) or not 0 <= int(d) < self.n_points:
            raise DescriptorError(f"descriptor {d!r} out of range for {self.n_points}-point space")
        return int(d)

    def distance(self, a, b):
        a, b = self.check(a), self.check(b)
        if a == b:
            return 0.0
        return float(self.weights[a] + self.weights[b])

    def points(self):
        return iter(range(self.n_points))

    def submatrix(self, ds):
        idx = np.array([self.check(d) for d in ds], dtype=np.intp)
        w = self.weights[idx]
        out = w[:, None] + w[None, :]
        out[idx[:, None] == idx[None, :]] = 0.0
        return out

    def __eq__(self, other):
        return isinstance(other, HubMetric) and np.array_equal(self.weights, other.weights)

    def __repr__(self):
        return f"HubMetric(n={self.n_points})"


@dataclass(frozen=True, eq=True)
class SubsetPointsMetric(MetricSpace):
    """``m`` x-points plus one implicit point per ``subset_size``-subset of them.

    x-points are addressed by ``int`` in ``[0, m)``; subset points by the sorted
    tuple of their indices. Distances, all scaled by ``delta``: x-points are
    pairwise ``delta`` apart, a subset point is ``delta/2`` from its own
    x-points and ``delta`` from everything else.
    """

    m: int
    subset_size: int
    delta: float = 1.0

    kind = "subset_points"

    def __post_init__(self):
        if self.m < 1 or not 1 <= self.subset_size <= self.m:
            raise ValueError(f"need 1 <= subset_size <= m, got m={self.m}, subset_size={self.subset_size}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def n_points(self) -> int:
        return self.m + math.comb(self.m, self.subset_size)

    def check(self, d):
        if isinstance(d, tuple):
            if (
                len(d) != self.subset_size
                or any(not 0 <= j < self.m for j in d)
                or any(d[i] >= d[i + 1] for i in range(len(d) - 1))
            ):
                raise DescriptorError(
                    f"subset descriptor {d!r} must be {self.subset_size} sorted unique indices in [0, {self.m})"
                )
            return tuple(int(j) for j in d)
        if not 0 <= int(d) < self.m:
            raise DescriptorError(f"x-point {d!r} out of range for m={self.m}")
        return int(d)

    def distance(self, a, b):
        a, b = self.check(a), self.check(b)
        if a == b:
            return 0.0
        if isinstance(a, tuple) and not isinstance(b, tuple):
            a, b = b, a
        if isinstance(b, tuple) and not isinstance(a, tuple):
            return self.delta / 2 if a in b else self.delta
        return self.delta

    def points(self):
        yield from range(self.m)
        yield from combinations(range(self.m), self.subset_size)


def distance(space: MetricSpace, a: Descriptor, b: Descriptor) -> float:
    return space.distance(a, b)


def nearest(space: MetricSpace, facilities: Iterable[Descriptor], v: Descriptor):
    """Closest facility to ``v`` and its distance; ``(None, inf)`` if there are none."""
    space.check(v)
    best, best_d = None, INF
    for f in sort_descriptors(facilities):
        d = space.distance(f, v)
        if d < best_d:
            best, best_d = f, d
    return best, best_d


@dataclass(frozen=True)
class Violation:
    kind: str  # "diagonal" | "negative" | "symmetry" | "triangle"
    indices: tuple
    amount: float


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "valid"
        v = self.violations[0]
        return f"{len(self.violations)} violation(s); first: {v.kind} at {v.indices} by {v.amount:.3g}"


def validate(space: MetricSpace, tol: float = METRIC_TOL) -> ValidationReport:
    """Check the metric axioms of an explicit matrix; other kinds are valid by construction."""
    report = ValidationReport()
    if not isinstance(space, ExplicitMetric):
        return report
    D = space.dist
    n = D.shape[0]
    if not np.all(np.isfinite(D)):
        for i, j in zip(*np.nonzero(~np.isfinite(D))):
            report.violations.append(Violation("non-finite", (int(i), int(j)), float("nan")))
        return report
    for i in range(n):
        if abs(D[i, i]) > tol:
            report.violations.append(Violation("diagonal", (i,), float(abs(D[i, i]))))
    for i, j in zip(*np.nonzero(D < -tol)):
        report.violations.append(Violation("negative", (int(i), int(j)), float(-D[i, j])))
    for i, j in zip(*np.nonzero(np.triu(np.abs(D - D.T) > tol, k=1))):
        report.violations.append(Violation("symmetry", (int(i), int(j)), float(abs(D[i, j] - D[j, i]))))
    # one entry per pair i < k, reporting the worst intermediate point j
    for i in range(n):
        via = D[i, :, None] + D[:, i + 1 :]  # via[j, k'] = D[i, j] + D[j, k]
        slack = D[i, i + 1 :] - via.min(axis=0)
        for kk in np.nonzero(slack > tol)[0]:
            k = i + 1 + int(kk)
            j = int(np.argmin(via[:, kk]))
            report.violations.append(Violation("triangle", (i, j, k), float(slack[kk])))
    return report
