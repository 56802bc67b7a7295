import math
from itertools import combinations

import numpy as np
import pytest
from scipy.sparse.csgraph import shortest_path

from oracles import enumerate_opt
from onlinefl.instances import Cluster, Instance, gen_clique, gen_star, gen_subset_iid
from onlinefl.metric import EuclideanMetric, ExplicitMetric, SubsetPointsMetric
from onlinefl.offline import (
    BudgetExceeded,
    clusters_of,
    default_candidates,
    evaluate,
    greedy_heuristic,
    solve_exact,
)


def random_explicit(rng, integer=False):
    npts = int(rng.integers(1, 9))
    if integer:
        # shortest paths over small integer weights: a metric with many exact ties
        w = rng.integers(1, 4, size=(npts, npts)).astype(float)
        D = shortest_path(np.minimum(w, w.T), method="FW")
    else:
        pts = rng.random((npts, 2)) * float(rng.choice([0.5, 1.0, 2.0]))
        D = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    demands = tuple(int(x) for x in rng.integers(0, npts, int(rng.integers(1, 11))))
    return Instance(ExplicitMetric(D), demands, facility_cost=float(rng.choice([0.5, 1.0, 2.0])))


class TestExamples:
    def test_star(self):
        sol = solve_exact(gen_star(4), list(range(5)))
        assert sol.total == 1.5 and sol.facilities == (4,)
        assert clusters_of(sol) == (Cluster(4, (0, 1, 2, 3)),)

    def test_single_demand(self):
        inst = Instance(ExplicitMetric([[0, 2], [2, 0]]), (1,))
        assert solve_exact(inst, [1]).total == 1.0
        assert greedy_heuristic(inst, [1]).total == 1.0

    def test_clique_tie_lexicographic(self):
        sol = solve_exact(gen_clique(0.5, 2), [0, 1])
        assert sol.total == 2.0 and sol.facilities == (0,)

    def test_greedy_clique(self):
        # one center already costs 1 + 6(0.1) = 1.6 < 3
        inst = gen_clique(0.1, 3)
        assert greedy_heuristic(inst).total == pytest.approx(1.6)
        assert solve_exact(inst).total == pytest.approx(1.6)

    def test_singleton_clusters(self):
        inst = Instance(ExplicitMetric([[0, 5, 5], [5, 0, 5], [5, 5, 0]]), (0, 1, 2))
        sol = solve_exact(inst)
        assert sol.total == 3.0
        assert clusters_of(sol) == tuple(Cluster(i, (i,)) for i in range(3))

    def test_empty_demands(self):
        inst = Instance(ExplicitMetric([[0.0]]), ())
        assert clusters_of(solve_exact(inst)) == ()

    def test_budget(self):
        inst = Instance(ExplicitMetric(np.zeros((30, 30))), (0,))
        with pytest.raises(BudgetExceeded, match="budget of 24"):
            solve_exact(inst)
        assert solve_exact(inst, budget=30).total == 1.0

    def test_json(self):
        doc = solve_exact(gen_star(4), list(range(5))).to_json()
        assert doc["total"] == 1.5 and doc["facilities"] == [{"x": 4}]
        assert doc["clusters"] == [{"center": {"x": 4}, "demand_indices": [0, 1, 2, 3]}]


class TestAgainstEnumeration:
    @pytest.mark.parametrize("seed", range(50))
    def test_generic(self, seed):
        inst = random_explicit(np.random.default_rng(seed))
        cands = tuple(range(inst.space.n_points))
        cost, facs = enumerate_opt(inst, cands)
        sol = solve_exact(inst, cands)
        assert abs(sol.total - cost) <= 1e-12
        assert sol.facilities == facs

    @pytest.mark.parametrize("seed", range(30))
    def test_with_ties(self, seed):
        inst = random_explicit(np.random.default_rng(1000 + seed), integer=True)
        cands = tuple(range(inst.space.n_points))
        cost, facs = enumerate_opt(inst, cands)
        sol = solve_exact(inst, cands)
        assert sol.total == cost and sol.facilities == facs

    @pytest.mark.parametrize("seed", range(20))
    def test_subset_points(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 7))
        sp = SubsetPointsMetric(m, int(rng.integers(1, m + 1)), float(rng.choice([0.25, 1.0, 3.0])))
        inst = Instance(sp, tuple(int(x) for x in rng.integers(0, m, int(rng.integers(1, 9)))))
        cost, _ = enumerate_opt(inst, tuple(sp.points()))
        assert solve_exact(inst).total == pytest.approx(cost, abs=1e-12)
        assert solve_exact(inst, default_candidates(inst)).total == pytest.approx(cost, abs=1e-12)

    @pytest.mark.parametrize("delta,k", [(0.05, 3), (0.3, 4), (0.5, 2)])
    def test_hub(self, delta, k):
        inst = gen_clique(delta, k)
        cost, _ = enumerate_opt(inst, tuple(range(k)))
        assert solve_exact(inst).total == pytest.approx(cost, abs=1e-12)

    @pytest.mark.parametrize("k", [2, 5, 9])
    def test_star_structured(self, k):
        assert solve_exact(gen_star(k)).total == pytest.approx(1 + k / (4 * math.sqrt(k)), abs=1e-12)


class TestProperties:
    @pytest.mark.parametrize("seed", range(25))
    def test_greedy_not_better(self, seed):
        inst = random_explicit(np.random.default_rng(500 + seed))
        assert greedy_heuristic(inst).total >= solve_exact(inst).total - 1e-12

    @pytest.mark.parametrize("seed", range(25))
    def test_nearest_assignment(self, seed):
        inst = random_explicit(np.random.default_rng(700 + seed))
        sol = solve_exact(inst)
        for i, v in enumerate(inst.demands):
            own = inst.space.distance(sol.assignment[i], v)
            assert all(own <= inst.space.distance(a, v) for a in sol.facilities)

    @pytest.mark.parametrize("seed", range(10))
    def test_totals_consistent(self, seed):
        inst = random_explicit(np.random.default_rng(900 + seed))
        sol = solve_exact(inst)
        assert sol.facility_total == len(sol.facilities) * inst.facility_cost
        assert sol.total == pytest.approx(sol.facility_total + sol.assignment_total)
        assert sorted(i for c in sol.clusters for i in c.demand_indices) == list(range(inst.n_demands))

    def test_evaluate_ties_to_lowest(self):
        inst = Instance(ExplicitMetric([[0, 1, 1], [1, 0, 2], [1, 2, 0]]), (0,))
        assert evaluate(inst, (2, 1)).assignment == (1,)

    def test_known_opt_upper_bound(self):
        tmpl, dist = gen_subset_iid(4)
        rng = np.random.default_rng(0)
        for _ in range(10):
            inst = tmpl.with_demands(dist.sample(rng, 4))
            assert solve_exact(inst).total <= tmpl.known_opt.value + 1e-12

    def test_euclidean_candidates_are_demand_locations(self):
        inst = Instance(EuclideanMetric([[0, 0], [1, 0], [5, 5]]), (1, 0, 1))
        assert default_candidates(inst) == (0, 1)

    def test_subset_candidates_cover(self):
        inst = Instance(SubsetPointsMetric(6, 3, 1.0), (0, 2, 2, 4))
        cands = default_candidates(inst)
        assert {0, 2, 4} <= set(cands)
        assert any(isinstance(c, tuple) and {0, 2, 4} <= set(c) for c in cands)
        assert all(not isinstance(c, tuple) or len(c) == 3 for c in cands)
        assert len(list(combinations(range(6), 3))) > sum(isinstance(c, tuple) for c in cands)
