"""Online facility location algorithms.

``run_rofl`` executes the randomized rule that opens a facility at the arriving
demand with probability ``g(d)`` (``d`` the distance to the nearest open
facility). ``run_fotakis`` executes the deterministic potential rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .instances import Instance
from .metric import (
    INF,
    ExplicitMetric,
    HubMetric,
    MetricSpace,
    SubsetPointsMetric,
    descriptor_key,
    nearest,
    sort_descriptors,
)

CLAMPED = "clamped_linear"
PIECEWISE = "piecewise_linear"
FOTAKIS = "fotakis_potential"
RULE_KINDS = (CLAMPED, PIECEWISE, FOTAKIS)

# slack on the weak "potential >= f" test; potentials are sums of many small terms
POTENTIAL_TOL = 1e-9


class WrongRuleError(ValueError):
    pass


class OracleUnavailable(TypeError):
    pass


@dataclass(frozen=True)
class OpeningRule:
    kind: str = CLAMPED
    q: float = 1.0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}; expected one of {RULE_KINDS}")
        if self.kind != FOTAKIS and not 0 < self.q <= 1:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")

    @classmethod
    def distprob(cls) -> "OpeningRule":
        return cls(CLAMPED, 1.0)

    @property
    def linear(self) -> bool:
        return self.kind != FOTAKIS

    @property
    def piecewise(self) -> bool:
        return self.kind == PIECEWISE

    def prob(self, d: float, f: float = 1.0) -> float:
        """Opening probability ``g(d)``; same arithmetic as the kernels."""
        if not self.linear:
            raise WrongRuleError("the potential rule has no opening probability")
        return kernels.python_backend._prob(float(d), self.q, float(f), self.piecewise)


@dataclass
class RunRecord:
    demands: tuple  # v_l per round
    dist: np.ndarray  # nearest open facility before round l (inf at first arrival)
    prob: np.ndarray  # coin probability; 0/1 for the deterministic rule
    opened: np.ndarray  # bool
    opened_at: tuple  # descriptor opened in round l, or None
    facility_paid: np.ndarray
    assign_paid: np.ndarray
    n_facilities: np.ndarray  # |F| after round l
    facilities: tuple
    potential: Optional[np.ndarray] = None  # potential rule only: best potential per round

    @property
    def facility_total(self) -> float:
        return float(self.facility_paid.sum())

    @property
    def assignment_total(self) -> float:
        return float(self.assign_paid.sum())

    @property
    def grand_total(self) -> float:
        return self.facility_total + self.assignment_total

    @property
    def n_rounds(self) -> int:
        return len(self.demands)

    def to_json(self) -> dict:
        from .instances import descriptor_to_json

        def num(x):
            return None if x == INF else float(x)

        rounds = []
        for t in range(self.n_rounds):
            r = {
                "demand": descriptor_to_json(self.demands[t]),
                "distance": num(self.dist[t]),
                "prob": float(self.prob[t]),
                "opened": bool(self.opened[t]),
                "facility_cost_paid": float(self.facility_paid[t]),
                "assignment_cost_paid": float(self.assign_paid[t]),
                "n_facilities": int(self.n_facilities[t]),
            }
            if self.opened_at[t] is not None:
                r["opened_at"] = descriptor_to_json(self.opened_at[t])
            if self.potential is not None:
                r["potential"] = num(self.potential[t])
            rounds.append(r)
        return {
            "rounds": rounds,
            "facility_total": self.facility_total,
            "assignment_total": self.assignment_total,
            "grand_total": self.grand_total,
            "facilities": [descriptor_to_json(f) for f in self.facilities],
        }


# ------------------------------------------------------------------ ROFL


@dataclass
class Plan:
    """Kernel-ready view of an instance: locations, their distances, demand map."""

    kind: str  # "hub" | "matrix"
    data: np.ndarray  # hub weights or location distance matrix
    loc_of: np.ndarray  # demand index -> kernel location
    locations: tuple  # kernel location -> descriptor
    facility_cost: float


def compile_plan(instance: Instance) -> Plan:
    space = instance.space
    if isinstance(space, HubMetric):
        return Plan(
            "hub",
            np.ascontiguousarray(space.weights),
            np.asarray(instance.demands, dtype=np.int_),
            tuple(range(space.n_points)),
            instance.facility_cost,
        )
    # the randomized rules only open at demand locations
    locs = sort_descriptors(set(instance.demands))
    index = {d: i for i, d in enumerate(locs)}
    D = np.ascontiguousarray(space.submatrix(locs), dtype=float)
    loc_of = np.fromiter((index[d] for d in instance.demands), dtype=np.int_, count=instance.n_demands)
    return Plan("matrix", D, loc_of, locs, instance.facility_cost)


def _check_order(order, n: int) -> np.ndarray:
    arr = np.asarray(order, dtype=np.int_).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0) | (arr >= n)][0]
        raise IndexError(f"order contains demand index {bad}, instance has {n} demands")
    return arr


def rofl_kernel(plan: Plan, order: np.ndarray, u: np.ndarray, rule: OpeningRule):
    """Run the chosen kernel; returns (n_open, assignment_total, dist, prob, opened, assign)."""
    n = order.shape[0]
    seq = np.ascontiguousarray(plan.loc_of[order])
    dist = np.empty(n)
    prob = np.empty(n)
    opened = np.empty(n, dtype=np.uint8)
    assign = np.empty(n)
    fn = kernels.rofl_hub if plan.kind == "hub" else kernels.rofl_matrix
    n_open, total = fn(plan.data, seq, np.ascontiguousarray(u, dtype=float), float(rule.q), rule.piecewise,
                       float(plan.facility_cost), dist, prob, opened, assign)
    return n_open, total, dist, prob, opened, assign


def rofl_cost(plan: Plan, order: np.ndarray, u: np.ndarray, rule: OpeningRule) -> float:
    n_open, total, *_ = rofl_kernel(plan, order, u, rule)
    return n_open * plan.facility_cost + total


def run_rofl(instance: Instance, order: Sequence[int], rule: OpeningRule, rng: np.random.Generator,
             plan: Optional[Plan] = None) -> RunRecord:
    """One execution. Draws exactly one uniform per round from ``rng``."""
    if not rule.linear:
        raise WrongRuleError("run_rofl takes a linear rule; use run_fotakis for the potential rule")
    order = _check_order(order, instance.n_demands)
    plan = plan or compile_plan(instance)
    u = rng.random(order.shape[0])
    n_open, _, dist, prob, opened, assign = rofl_kernel(plan, order, u, rule)
    f = instance.facility_cost
    opened = opened.astype(bool)
    demands = tuple(instance.demands[i] for i in order)
    return RunRecord(
        demands=demands,
        dist=dist,
        prob=prob,
        opened=opened,
        opened_at=tuple(d if o else None for d, o in zip(demands, opened)),
        facility_paid=np.where(opened, f, 0.0),
        assign_paid=assign,
        n_facilities=np.cumsum(opened),
        facilities=sort_descriptors(set(d for d, o in zip(demands, opened) if o)),
    )


# ------------------------------------------------------------------ potential rule


def _ranked_locations(gain: np.ndarray, seen: np.ndarray, policy: str) -> np.ndarray:
    m = gain.shape[0]
    idx = np.arange(m)
    if policy == "adversarial":
        # positive gain first, then locations already seen, then unused ones from the top
        return np.lexsort((np.where(seen, idx, -idx), ~seen, -gain))
    return np.lexsort((idx, -gain))


def _location_sums(space: SubsetPointsMetric, served):
    m, delta = space.m, space.delta
    s_zero = np.zeros(m)
    s_half = np.zeros(m)
    s_full = np.zeros(m)
    seen = np.zeros(m, dtype=bool)
    for x, D in served:
        if isinstance(x, tuple):
            raise OracleUnavailable("demands at subset points are not supported by the analytic oracle")
        s_zero[x] += D
        s_half[x] += max(D - delta / 2, 0.0)
        s_full[x] += max(D - delta, 0.0)
        seen[x] = True
    return s_zero, s_half, s_full, seen


def _direct_potential(space, z, served) -> float:
    total = 0.0
    for x, D in served:
        total += max(D - space.distance(z, x), 0.0)
    return total


def best_subset_point(space: SubsetPointsMetric, served, policy: str = "lowest"):
    """Subset point of largest potential and that potential.

    A subset point's potential only depends on which served locations its
    index set contains, and each location contributes independently, so the
    best index set keeps the locations of largest gain.
    """
    if not isinstance(space, SubsetPointsMetric):
        raise OracleUnavailable("the subset-point oracle needs a subset-point space")
    _, s_half, s_full, seen = _location_sums(space, served)
    order = _ranked_locations(s_half - s_full, seen, policy)
    best = tuple(sorted(int(j) for j in order[: space.subset_size]))
    return best, _direct_potential(space, best, served)


def subset_potential_argmax(space: SubsetPointsMetric, facilities, served, policy: str = "lowest"):
    """Point maximizing ``sum_i max(D_i - d(z, v_i), 0)`` over x-points and subset points.

    ``served`` lists ``(x-point, D)`` pairs in arrival order, ``D`` being the
    demand's current distance to ``facilities``. Returns ``(descriptor, value)``
    with the value summed directly over ``served``; x-points win exact ties.
    """
    if not isinstance(space, SubsetPointsMetric):
        raise OracleUnavailable("subset_potential_argmax needs a subset-point space")
    if not served:
        return 0, 0.0
    s_zero, _, s_full, _ = _location_sums(space, served)
    best_x = int(np.argmax(s_zero - s_full))
    px = _direct_potential(space, best_x, served)
    best_s, ps = best_subset_point(space, served, policy)
    if ps > px + 1e-12:
        return best_s, ps
    return best_x, px


def _potential_argmax_matrix(pot: np.ndarray, points: tuple):
    z = int(np.argmax(pot))  # first maximum is the lowest descriptor
    return points[z], float(pot[z])


def run_fotakis(instance: Instance, order: Sequence[int], tie_break: str = "lowest",
                candidate_oracle=None, incremental: bool = False) -> RunRecord:
    """Deterministic potential rule.

    Each round computes ``D_i = d(F, v_i)`` for every demand seen so far
    (including the arriving one), opens the potential maximizer if its
    potential reaches ``f``, then assigns the arriving demand to its nearest
    open facility. An empty facility set opens at the first demand.

    ``tie_break`` is ``"lowest"`` or ``"adversarial"``; the latter fills a
    subset point's index set with already-seen locations and then with the
    highest-index unused ones. ``incremental=True`` keeps the potential
    aggregates between rounds instead of rebuilding them; both modes perform
    identical floating-point operations.
    """
    if tie_break not in ("lowest", "adversarial"):
        raise ValueError(f"unknown tie-break policy {tie_break!r}")
    order = _check_order(order, instance.n_demands)
    space = instance.space
    f = instance.facility_cost
    subset = isinstance(space, SubsetPointsMetric)
    if subset:
        oracle = candidate_oracle or subset_potential_argmax
    elif isinstance(space, MetricSpace) and candidate_oracle is None:
        expl = space.to_explicit()
        points = tuple(range(expl.n_points))
        oracle = None
    else:
        oracle = candidate_oracle

    n = order.shape[0]
    demands = tuple(instance.demands[i] for i in order)
    facilities: list = []
    D: list = []  # current distance of each seen demand to the facility set
    pot = None  # per-point potential vector (matrix spaces)
    rec_dist = np.empty(n)
    rec_pot = np.zeros(n)
    rec_open = np.zeros(n, dtype=bool)
    rec_at = []
    assign = np.empty(n)
    n_fac = np.empty(n, dtype=np.int_)

    def nearest_dist(v):
        return nearest(space, facilities, v)[1]

    def rebuild_pot():
        p = np.zeros(len(points))
        for v, d in zip(demands, D):
            p += np.maximum(d - expl.dist[:, v], 0.0)
        return p

    for t, v in enumerate(demands):
        if incremental:
            d_new = nearest_dist(v) if facilities else INF
        else:
            D = [nearest_dist(w) for w in demands[:t]]
            d_new = nearest_dist(v) if facilities else INF
        D.append(d_new)
        rec_dist[t] = d_new
        at = None
        if not facilities:
            at, value = v, INF
        elif subset or oracle is not None:
            z, value = (oracle or subset_potential_argmax)(
                space, tuple(facilities), list(zip(demands[: t + 1], D)), tie_break
            )
            if value >= f - POTENTIAL_TOL:
                at = z
        else:
            if incremental and pot is not None:
                pot += np.maximum(d_new - expl.dist[:, v], 0.0)
            else:
                pot = rebuild_pot()
            z, value = _potential_argmax_matrix(pot, points)
            if value >= f - POTENTIAL_TOL:
                at = z
        rec_pot[t] = value
        if at is not None:
            facilities.append(at)
            facilities.sort(key=descriptor_key)
            rec_open[t] = True
            if incremental:
                D = [min(d, space.distance(at, w)) for d, w in zip(D, demands)]
                if not subset and oracle is None:
                    pot = rebuild_pot()
        rec_at.append(at)
        assign[t] = nearest_dist(v)
        n_fac[t] = len(facilities)

    return RunRecord(
        demands=demands,
        dist=rec_dist,
        prob=rec_open.astype(float),
        opened=rec_open,
        opened_at=tuple(rec_at),
        facility_paid=np.where(rec_open, f, 0.0),
        assign_paid=assign,
        n_facilities=n_fac,
        facilities=sort_descriptors(facilities),
        potential=rec_pot,
    )


def run(instance: Instance, order, rule: OpeningRule, rng=None, tie_break: str = "lowest", plan=None) -> RunRecord:
    if rule.linear:
        if rng is None:
            raise ValueError("the randomized rules need an rng")
        return run_rofl(instance, order, rule, rng, plan=plan)
    return run_fotakis(instance, order, tie_break=tie_break)
