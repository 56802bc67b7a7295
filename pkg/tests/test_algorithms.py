import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_potential_max, expected_cost_exhaustive, potential
from onlinefl.algorithms import (
    OpeningRule,
    OracleUnavailable,
    WrongRuleError,
    best_subset_point,
    compile_plan,
    rofl_cost,
    run_fotakis,
    run_rofl,
    subset_potential_argmax,
)
from onlinefl.harness import closed_form
from onlinefl.instances import Instance, fotakis_delta, gen_clique, gen_fotakis, gen_star
from onlinefl.metric import EuclideanMetric, ExplicitMetric, SubsetPointsMetric


class TestOpeningRule:
    def test_distprob(self):
        r = OpeningRule.distprob()
        assert r.prob(0.3) == 0.3 and r.prob(2.0) == 1.0 and r.prob(math.inf) == 1.0

    def test_clamped_vs_piecewise(self):
        c = OpeningRule("clamped_linear", 0.5)
        p = OpeningRule("piecewise_linear", 0.5)
        assert c.prob(0.8) == p.prob(0.8) == 0.4
        assert c.prob(1.5) == 0.75
        assert p.prob(1.5) == 1.0
        assert c.prob(3.0) == 1.0

    def test_facility_cost_scaling(self):
        r = OpeningRule("clamped_linear", 0.5)
        assert r.prob(1.0, f=2.0) == 0.25

    @pytest.mark.parametrize("q", [0, -0.5, 1.5])
    def test_bad_q(self, q):
        with pytest.raises(ValueError):
            OpeningRule("clamped_linear", q)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            OpeningRule("greedy", 0.5)


class TestRunRofl:
    def test_star_trace(self):
        rec = run_rofl(gen_star(4), [2, 0, 3, 1], OpeningRule.distprob(), np.random.default_rng(0))
        assert rec.dist[0] == math.inf and rec.prob[0] == 1.0 and rec.opened[0]
        assert rec.facility_paid[0] == 1.0 and rec.assign_paid[0] == 0.0
        assert np.all(rec.dist[1:] == 0.25) and np.all(rec.prob[1:] == 0.25)

    def test_record_invariants(self):
        inst = gen_clique(0.3, 5)
        rng = np.random.default_rng(4)
        for _ in range(20):
            rec = run_rofl(inst, rng.permutation(inst.n_demands), OpeningRule("clamped_linear", 0.5), rng)
            assert rec.grand_total == pytest.approx(rec.facility_total + rec.assignment_total)
            assert rec.facility_total == rec.opened.sum() * inst.facility_cost
            assert np.all(rec.assign_paid[rec.opened] == 0)
            assert np.all(rec.assign_paid <= rec.dist)
            assert rec.n_facilities[-1] == len(rec.facilities) == rec.opened.sum()

    def test_colocated_never_opens(self):
        sp = ExplicitMetric([[0, 1], [1, 0]])
        inst = Instance(sp, (0, 0, 0, 0))
        rec = run_rofl(inst, range(4), OpeningRule.distprob(), np.random.default_rng(1))
        assert list(rec.prob) == [1, 0, 0, 0]
        assert rec.grand_total == 1.0

    def test_one_draw_per_round(self):
        inst = gen_star(9)
        a, b = np.random.default_rng(5), np.random.default_rng(5)
        run_rofl(inst, range(9), OpeningRule.distprob(), a)
        b.random(9)
        assert a.random() == b.random()

    def test_determinism(self):
        inst = gen_clique(0.2, 6)
        order = np.random.default_rng(0).permutation(inst.n_demands)
        r1 = run_rofl(inst, order, OpeningRule("piecewise_linear", 0.5), np.random.default_rng(9))
        r2 = run_rofl(inst, order, OpeningRule("piecewise_linear", 0.5), np.random.default_rng(9))
        assert r1.to_json() == r2.to_json()

    def test_invalid_index(self):
        with pytest.raises(IndexError):
            run_rofl(gen_star(3), [0, 3], OpeningRule.distprob(), np.random.default_rng())

    def test_potential_rule_rejected(self):
        with pytest.raises(WrongRuleError):
            run_rofl(gen_star(3), [0], OpeningRule("fotakis_potential"), np.random.default_rng())

    def test_facility_cost_rescaling(self):
        # doubling every distance and f doubles every cost, coin for coin
        pts = np.random.default_rng(2).random((6, 2))
        a = Instance(EuclideanMetric(pts), tuple(range(6)) * 2)
        b = Instance(EuclideanMetric(2 * pts), tuple(range(6)) * 2, facility_cost=2.0)
        order = np.random.default_rng(3).permutation(12)
        ra = run_rofl(a, order, OpeningRule("clamped_linear", 0.5), np.random.default_rng(7))
        rb = run_rofl(b, order, OpeningRule("clamped_linear", 0.5), np.random.default_rng(7))
        assert np.array_equal(ra.opened, rb.opened)
        assert rb.grand_total == pytest.approx(2 * ra.grand_total)

    def test_hub_and_matrix_paths_agree(self):
        inst = gen_clique(0.35, 5)
        explicit = Instance(inst.space.to_explicit(), inst.demands)
        p_hub, p_mat = compile_plan(inst), compile_plan(explicit)
        assert p_hub.kind == "hub" and p_mat.kind == "matrix"
        rng = np.random.default_rng(0)
        for _ in range(50):
            order = rng.permutation(inst.n_demands)
            u = rng.random(inst.n_demands)
            rule = OpeningRule("clamped_linear", 0.7)
            assert rofl_cost(p_hub, order, u, rule) == rofl_cost(p_mat, order, u, rule)


class TestExhaustiveExpectation:
    def test_clique_oracle_value(self):
        assert expected_cost_exhaustive(gen_clique(0.5, 2)) == pytest.approx(2.125, abs=1e-12)

    @pytest.mark.parametrize("delta,k,q", [(0.5, 2, 1.0), (0.5, 2, 0.5), (0.3, 3, 0.5), (0.2, 2, 0.25)])
    def test_clique_closed_form(self, delta, k, q):
        rule = OpeningRule("clamped_linear", q)
        cf = closed_form("clique", {"delta": delta, "k": k}, rule)
        assert expected_cost_exhaustive(gen_clique(delta, k), q) == pytest.approx(cf.alg, rel=1e-12)

    @pytest.mark.parametrize("k,q", [(2, 1.0), (4, 1.0), (5, 0.5), (3, 0.25)])
    def test_star_closed_form(self, k, q):
        cf = closed_form("star", {"k": k}, OpeningRule("clamped_linear", q))
        star = gen_star(k)
        explicit = Instance(star.space.to_explicit(), star.demands)
        assert expected_cost_exhaustive(explicit, q) == pytest.approx(cf.alg, rel=1e-12)


class TestFotakis:
    @pytest.mark.parametrize("n", [5, 17, 37])
    @pytest.mark.parametrize("incremental", [False, True])
    def test_lower_bound_trace(self, n, incremental):
        inst, order = gen_fotakis(n)
        d = fotakis_delta(n)
        rec = run_fotakis(inst, order, tie_break="adversarial", incremental=incremental)
        assert abs(rec.grand_total - (1 + (n - 1) * 1.5 * d - (n - 1) * d * d / 4)) <= 1e-9
        assert rec.n_facilities[-1] == round(1 + (n - 1) * d / 2)

    def test_two_point_trace(self):
        inst = Instance(ExplicitMetric([[0, 0.4], [0.4, 0]]), (0, 1))
        rec = run_fotakis(inst, [0, 1])
        assert list(rec.opened) == [True, False]
        assert rec.potential[1] == pytest.approx(0.4)
        assert rec.assign_paid[1] == 0.4 and rec.grand_total == 1.4

    def test_repeated_demand_adds_nothing(self):
        inst = Instance(ExplicitMetric([[0, 0.4], [0.4, 0]]), (0, 0, 0))
        rec = run_fotakis(inst, [0, 1, 2])
        assert list(rec.potential[1:]) == [0.0, 0.0]
        assert rec.grand_total == 1.0

    def test_opens_when_potential_reaches_f(self):
        # three demands at point 1, 0.5 away from the open facility at 0
        inst = Instance(ExplicitMetric([[0, 0.5], [0.5, 0]]), (0, 1, 1))
        rec = run_fotakis(inst, [0, 1, 2])
        assert list(rec.opened) == [True, False, True]
        assert rec.opened_at[2] == 1
        assert rec.grand_total == 2.5

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 7), st.integers(1, 12), st.integers(0, 10_000))
    def test_incremental_matches_recompute_explicit(self, npts, ndem, seed):
        rng = np.random.default_rng(seed)
        pts = rng.random((npts, 2)) * 3
        inst = Instance(EuclideanMetric(pts), tuple(int(x) for x in rng.integers(0, npts, ndem)))
        order = rng.permutation(ndem)
        a = run_fotakis(inst, order)
        b = run_fotakis(inst, order, incremental=True)
        assert a.to_json() == b.to_json()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_incremental_matches_recompute_subset(self, seed):
        rng = np.random.default_rng(seed)
        sp = SubsetPointsMetric(8, int(rng.integers(1, 5)), float(rng.choice([0.1, 0.25, 0.5])))
        inst = Instance(sp, tuple(int(x) for x in rng.integers(0, 8, int(rng.integers(1, 30)))))
        order = rng.permutation(inst.n_demands)
        for policy in ("lowest", "adversarial"):
            a = run_fotakis(inst, order, tie_break=policy)
            b = run_fotakis(inst, order, tie_break=policy, incremental=True)
            assert a.to_json() == b.to_json()

    def test_unknown_policy(self):
        inst, order = gen_fotakis(5)
        with pytest.raises(ValueError):
            run_fotakis(inst, order, tie_break="random")

    def test_subset_demands_unsupported(self):
        inst = Instance(SubsetPointsMetric(4, 2), (0, (0, 1)))
        with pytest.raises(OracleUnavailable):
            run_fotakis(inst, [0, 1])


class TestSubsetPotential:
    def test_fresh_locations_reach_one(self):
        delta = 0.25
        sp = SubsetPointsMetric(34, 17, delta)
        served = [(0, 0.0)] + [(j, delta) for j in range(1, 9)]
        z, value = subset_potential_argmax(sp, (0,), served)
        assert isinstance(z, tuple) and value == pytest.approx(1.0)
        assert set(range(1, 9)) <= set(z)

    def test_no_served(self):
        sp = SubsetPointsMetric(4, 2)
        assert subset_potential_argmax(sp, (), [])[1] == 0.0
        assert best_subset_point(sp, [])[1] == 0.0

    def test_single_served(self):
        sp = SubsetPointsMetric(4, 2, 1.0)
        I, value = best_subset_point(sp, [(1, 1.0)])
        assert 1 in I and value == 0.5
        z, value = subset_potential_argmax(sp, (), [(1, 1.0)])
        assert z == 1 and value == 1.0

    def test_adversarial_policy_prefers_seen_then_high(self):
        sp = SubsetPointsMetric(10, 4, 1.0)
        served = [(2, 1.0), (5, 0.0)]
        I, _ = best_subset_point(sp, served, "adversarial")
        assert I == (2, 5, 8, 9)
        I, _ = best_subset_point(sp, served, "lowest")
        assert I == (0, 1, 2, 3)

    def test_wrong_space(self):
        with pytest.raises(OracleUnavailable):
            subset_potential_argmax(ExplicitMetric(np.zeros((1, 1))), (), [])

    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 10_000))
    def test_matches_enumeration(self, m, seed):
        rng = np.random.default_rng(seed)
        ns = int(rng.integers(1, m + 1))
        delta = float(rng.choice([0.25, 0.5, 1.0]))
        # dyadic values keep every sum exact, so maximizers can be compared exactly
        served = [(int(rng.integers(m)), float(rng.integers(0, 9)) / 8) for _ in range(int(rng.integers(0, 10)))]
        sp = SubsetPointsMetric(m, ns, delta)
        top, maximizers = enumerate_potential_max(sp, served)
        z, value = subset_potential_argmax(sp, (), served)
        assert value == top
        assert potential(sp, z, served) == top
        if served:
            assert z == maximizers[0]
        subsets = [p for p in maximizers if isinstance(p, tuple)]
        I, sv = best_subset_point(sp, served)
        best_s = max(potential(sp, s, served) for s in __import__("itertools").combinations(range(m), ns))
        assert sv == best_s
        if subsets:
            assert I == subsets[0]
