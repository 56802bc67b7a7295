"""Exact offline optimum and cluster extraction.

The general solver is exhaustive depth-first search over facility subsets in
lexicographic order with a lower-bound prune, guarded by a candidate budget.
Hub and subset-point spaces have dedicated exact solvers that exploit their
structure, so the large generated instances never need enumeration.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .instances import Cluster, Instance
from .metric import (
    EuclideanMetric,
    ExplicitMetric,
    HubMetric,
    MetricSpace,
    SubsetPointsMetric,
    descriptor_key,
    sort_descriptors,
)

DEFAULT_BUDGET = 24
TIE_TOL = 1e-12


class BudgetExceeded(RuntimeError):
    def __init__(self, n_candidates: int, budget: int):
        super().__init__(
            f"{n_candidates} candidate centers exceed the exhaustive-search budget of {budget}; "
            "pass fewer candidates, raise the budget, or use analytic OPT"
        )
        self.n_candidates = n_candidates
        self.budget = budget


@dataclass(frozen=True)
class OfflineSolution:
    facilities: tuple
    assignment: tuple  # demand index -> facility descriptor
    facility_total: float
    assignment_total: float
    total: float
    clusters: tuple

    def to_json(self) -> dict:
        from .instances import descriptor_to_json

        return {
            "total": self.total,
            "facility_total": self.facility_total,
            "assignment_total": self.assignment_total,
            "facilities": [descriptor_to_json(f) for f in self.facilities],
            "clusters": [
                {"center": descriptor_to_json(c.center), "demand_indices": list(c.demand_indices)}
                for c in self.clusters
            ],
        }


def cross_distances(space: MetricSpace, A: Sequence, B: Sequence) -> np.ndarray:
    """``out[i, j] = d(A[i], B[j])``."""
    if isinstance(space, (ExplicitMetric, HubMetric, EuclideanMetric)):
        a = np.array([space.check(x) for x in A], dtype=np.intp)
        b = np.array([space.check(x) for x in B], dtype=np.intp)
        if isinstance(space, ExplicitMetric):
            return space.dist[np.ix_(a, b)].copy()
        if isinstance(space, HubMetric):
            w = space.weights
            out = w[a][:, None] + w[b][None, :]
            out[a[:, None] == b[None, :]] = 0.0
            return out
        diff = space.coords[a][:, None, :] - space.coords[b][None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))
    out = np.empty((len(A), len(B)))
    for i, x in enumerate(A):
        for j, y in enumerate(B):
            out[i, j] = space.distance(x, y)
    return out


def _locations(instance: Instance):
    counts = Counter(instance.demands)
    locs = sort_descriptors(counts)
    return locs, np.array([counts[x] for x in locs], dtype=float)


def evaluate(instance: Instance, facilities) -> OfflineSolution:
    """Cost of serving every demand from its nearest facility in ``facilities``."""
    facs = sort_descriptors(set(instance.space.check(f) for f in facilities))
    f = instance.facility_cost
    if not instance.demands:
        return OfflineSolution(facs, (), len(facs) * f, 0.0, len(facs) * f, ())
    if not facs:
        raise ValueError("a non-empty demand set needs at least one facility")
    locs, _ = _locations(instance)
    M = cross_distances(instance.space, facs, locs)
    best = np.argmin(M, axis=0)  # first minimum is the lowest descriptor
    loc_index = {x: j for j, x in enumerate(locs)}
    assignment = []
    dists = np.empty(instance.n_demands)
    for i, v in enumerate(instance.demands):
        j = loc_index[v]
        assignment.append(facs[best[j]])
        dists[i] = M[best[j], j]
    assignment_total = float(dists.sum())
    facility_total = len(facs) * f
    members: dict = {}
    for i, a in enumerate(assignment):
        members.setdefault(a, []).append(i)
    clusters = tuple(Cluster(a, tuple(members[a])) for a in facs if a in members)
    return OfflineSolution(facs, tuple(assignment), facility_total, assignment_total,
                           facility_total + assignment_total, clusters)


def clusters_of(solution: OfflineSolution) -> tuple:
    return solution.clusters


def default_candidates(instance: Instance) -> tuple:
    """All points for finite spaces; demand locations for Euclidean spaces.

    Subset-point spaces get the demand locations plus, for every offset in the
    count-ranked location list, the subset point covering the next
    ``subset_size`` locations.
    """
    space = instance.space
    if isinstance(space, EuclideanMetric):
        return sort_descriptors(set(instance.demands))
    if isinstance(space, SubsetPointsMetric):
        ranked = _ranked_x_locations(instance)
        out = set(ranked)
        for a in range(len(ranked)):
            out.add(_covering_subset(space, ranked[a : a + space.subset_size]))
        return sort_descriptors(out)
    return tuple(space.points())


# ------------------------------------------------------------------ exhaustive search


def _search(M: np.ndarray, c: np.ndarray, f: float, incumbent: float):
    """Lexicographic DFS over non-empty row subsets of ``M``.

    Keeps the first subset (in sorted-tuple order) whose cost beats the
    incumbent by more than ``TIE_TOL``.
    """
    n, L = M.shape
    suffix = np.full((n + 1, L), math.inf)
    for j in range(n - 1, -1, -1):
        suffix[j] = np.minimum(M[j], suffix[j + 1])
    best_cost = incumbent
    best_set = None
    chosen: list = []

    def visit(start: int, cur: np.ndarray):
        nonlocal best_cost, best_set
        k = len(chosen) + 1
        for j in range(start, n):
            new = np.minimum(cur, M[j])
            lb = k * f + float(c @ np.minimum(new, suffix[j + 1]))
            if lb >= best_cost - TIE_TOL:
                continue
            chosen.append(j)
            cost = k * f + float(c @ new)
            if cost < best_cost - TIE_TOL:
                best_cost, best_set = cost, tuple(chosen)
            if j + 1 < n and (k + 1) * f + float(c @ np.minimum(new, suffix[j + 1])) < best_cost - TIE_TOL:
                visit(j + 1, new)
            chosen.pop()

    visit(0, np.full(L, math.inf))
    return best_set


def solve_exact(instance: Instance, candidate_centers=None, budget: int = DEFAULT_BUDGET) -> OfflineSolution:
    """Minimum-cost facility set.

    With explicit ``candidate_centers`` (or on explicit and Euclidean spaces)
    this enumerates subsets of the candidates, refusing with
    :class:`BudgetExceeded` when there are more than ``budget`` of them.
    Without candidates, hub and subset-point spaces use their exact
    structured solvers over the whole space. Ties go to the lexicographically
    smallest facility set.
    """
    if not instance.demands:
        return evaluate(instance, ())
    space = instance.space
    if candidate_centers is None:
        if isinstance(space, HubMetric):
            return evaluate(instance, _hub_optimum(instance))
        if isinstance(space, SubsetPointsMetric) and not any(isinstance(v, tuple) for v in instance.demands):
            return evaluate(instance, _subset_optimum(instance))
        candidate_centers = default_candidates(instance)
    cands = sort_descriptors(set(space.check(x) for x in candidate_centers))
    if not cands:
        raise ValueError("candidate_centers must be non-empty")
    if len(cands) > budget:
        raise BudgetExceeded(len(cands), budget)
    locs, c = _locations(instance)
    M = cross_distances(space, cands, locs)
    greedy = greedy_heuristic(instance, cands)
    chosen = _search(M, c, instance.facility_cost, greedy.total + 2 * TIE_TOL)
    if chosen is None:
        return greedy
    return evaluate(instance, [cands[j] for j in chosen])


def greedy_heuristic(instance: Instance, candidate_centers=None) -> OfflineSolution:
    """Repeatedly open the candidate with the largest cost decrease until none helps."""
    if not instance.demands:
        return evaluate(instance, ())
    cands = sort_descriptors(set(candidate_centers if candidate_centers is not None else default_candidates(instance)))
    if not cands:
        raise ValueError("candidate_centers must be non-empty")
    locs, c = _locations(instance)
    M = cross_distances(instance.space, cands, locs)
    f = instance.facility_cost
    cur = np.full(len(locs), math.inf)
    opened: list = []
    cost = math.inf
    while True:
        trial = np.minimum(cur[None, :], M) @ c + (len(opened) + 1) * f
        trial[opened] = math.inf
        j = int(np.argmin(trial))
        if not trial[j] < cost - TIE_TOL:
            break
        opened.append(j)
        cur = np.minimum(cur, M[j])
        cost = float(trial[j])
    return evaluate(instance, [cands[j] for j in opened])


# ------------------------------------------------------------------ structured solvers


def _hub_optimum(instance: Instance) -> tuple:
    """Exact optimum for ``d(a, b) = w_a + w_b``.

    Fix the lightest open facility ``s``. Every other demand location ``v``
    is then served at ``w_v + w_s`` unless it opens its own facility, which
    pays off exactly when ``count_v (w_v + w_s) > f``.
    """
    space = instance.space
    w = space.weights
    f = instance.facility_cost
    counts = Counter(instance.demands)
    pts = sorted(counts, key=lambda v: (w[v], v))
    idle = [v for v in range(space.n_points) if v not in counts]
    if idle:
        pts = sorted(pts + [min(idle, key=lambda v: (w[v], v))], key=lambda v: (w[v], v))
    P = np.array(pts, dtype=np.intp)
    wp = w[P]
    cp = np.array([counts.get(v, 0) for v in pts], dtype=float)
    best_cost, best_p = math.inf, 0
    for p in range(len(pts)):
        serve = cp * (wp + wp[p])
        cost = f + serve[:p].sum() + np.minimum(serve[p + 1 :], f).sum()
        if cost < best_cost - TIE_TOL:
            best_cost, best_p = cost, p
    serve = cp * (wp + wp[best_p])
    extra = [int(P[j]) for j in range(best_p + 1, len(pts)) if serve[j] > f]
    return tuple(sorted([int(P[best_p])] + extra))


def _ranked_x_locations(instance: Instance) -> list:
    counts = Counter(instance.demands)
    return sorted(counts, key=lambda x: (-counts[x], x))


def _covering_subset(space: SubsetPointsMetric, chunk) -> tuple:
    chunk = sorted(chunk)
    pad = (j for j in range(space.m) if j not in set(chunk))
    return tuple(sorted(chunk + [next(pad) for _ in range(space.subset_size - len(chunk))]))


def _subset_optimum(instance: Instance) -> tuple:
    """Exact optimum when all demands sit at x-points.

    A location is served at 0 (own facility), ``delta/2`` (inside an open
    subset point) or ``delta``. Some optimum opens the ``a`` most-demanded
    locations and covers the next ``s * subset_size`` with ``s`` subset
    points, so enumerating ``(a, s)`` is exact.
    """
    space = instance.space
    ns, delta, f = space.subset_size, space.delta, instance.facility_cost
    ranked = _ranked_x_locations(instance)
    counts = Counter(instance.demands)
    cnt = np.array([counts[x] for x in ranked], dtype=float)
    prefix = np.concatenate([[0.0], np.cumsum(cnt)])
    L = len(ranked)
    best_cost, best = math.inf, (L, 0)
    for a in range(L + 1):
        for s in range(0, -(-(L - a) // ns) + 1):
            if a + s == 0:
                continue
            cov = min(s * ns, L - a)
            cost = (a + s) * f + delta / 2 * (prefix[a + cov] - prefix[a]) + delta * (prefix[L] - prefix[a + cov])
            if cost < best_cost - TIE_TOL:
                best_cost, best = cost, (a, s)
    a, s = best
    facs = list(ranked[:a])
    rest = ranked[a:]
    for t in range(s):
        facs.append(_covering_subset(space, rest[t * ns : (t + 1) * ns]))
    return sort_descriptors(facs)
