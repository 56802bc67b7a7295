import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinefl import kernels
from onlinefl.algorithms import OpeningRule, compile_plan, rofl_kernel
from onlinefl.arrival import cluster_distances
from onlinefl.instances import Instance, gen_clique, gen_star
from onlinefl.metric import EuclideanMetric, distance

needs_compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled extension not built")


def _outs(n):
    return np.empty(n), np.empty(n), np.empty(n, dtype=np.uint8), np.empty(n)


def naive_rofl(instance, order, u, q, piecewise):
    f = instance.facility_cost
    facs, cost = [], 0.0
    for t, i in enumerate(order):
        v = instance.demands[i]
        d = min((distance(instance.space, a, v) for a in facs), default=math.inf)
        x = d / f
        p = 1.0 if d == math.inf else (q * x if x <= 1 else 1.0) if piecewise else min(q * x, 1.0)
        if u[t] < p:
            facs.append(v)
            cost += f
        else:
            cost += d
    return cost, len(facs)


def _random_instance(rng):
    npts = int(rng.integers(1, 8))
    pts = rng.random((npts, 2)) * float(rng.choice([0.5, 1.0, 3.0]))
    ndem = int(rng.integers(1, 25))
    return Instance(EuclideanMetric(pts), tuple(int(x) for x in rng.integers(0, npts, ndem)),
                    facility_cost=float(rng.choice([0.5, 1.0, 2.0])))


class TestAgainstNaiveLoop:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 100_000), st.sampled_from([0.25, 0.5, 1.0]), st.booleans())
    def test_matrix(self, seed, q, piecewise):
        rng = np.random.default_rng(seed)
        inst = _random_instance(rng)
        order = rng.permutation(inst.n_demands)
        u = rng.random(inst.n_demands)
        n_open, total, *_ = rofl_kernel(compile_plan(inst), order, u, OpeningRule("piecewise_linear" if piecewise
                                                                                   else "clamped_linear", q))
        cost, opened = naive_rofl(inst, order, u, q, piecewise)
        assert n_open == opened
        assert n_open * inst.facility_cost + total == pytest.approx(cost, abs=1e-12)

    @pytest.mark.parametrize("make", [lambda: gen_star(6), lambda: gen_clique(0.3, 4)])
    def test_hub(self, make):
        inst = make()
        rng = np.random.default_rng(0)
        for _ in range(50):
            order = rng.permutation(inst.n_demands)
            u = rng.random(inst.n_demands)
            n_open, total, *_ = rofl_kernel(compile_plan(inst), order, u, OpeningRule("clamped_linear", 0.5))
            cost, opened = naive_rofl(inst, order, u, 0.5, False)
            assert n_open == opened and n_open + total == pytest.approx(cost, abs=1e-12)


@needs_compiled
class TestBackendsIdentical:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 100_000), st.floats(0.05, 1.0), st.booleans())
    def test_matrix(self, seed, q, piecewise):
        rng = np.random.default_rng(seed)
        inst = _random_instance(rng)
        plan = compile_plan(inst)
        seq = np.ascontiguousarray(plan.loc_of[rng.permutation(inst.n_demands)])
        u = rng.random(seq.shape[0])
        a, b = _outs(seq.shape[0]), _outs(seq.shape[0])
        ra = kernels.compiled_backend.rofl_matrix(plan.data, seq, u, q, piecewise, inst.facility_cost, *a)
        rb = kernels.python_backend.rofl_matrix(plan.data, seq, u, q, piecewise, inst.facility_cost, *b)
        assert ra == rb
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 300), st.integers(0, 100_000), st.floats(0.05, 1.0))
    def test_hub(self, k, seed, q):
        rng = np.random.default_rng(seed)
        plan = compile_plan(gen_star(k))
        seq = np.ascontiguousarray(plan.loc_of[rng.permutation(k)])
        u = rng.random(k)
        a, b = _outs(k), _outs(k)
        ra = kernels.compiled_backend.rofl_hub(plan.data, seq, u, q, False, 1.0, *a)
        rb = kernels.python_backend.rofl_hub(plan.data, seq, u, q, False, 1.0, *b)
        assert ra == rb
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100_000), st.sampled_from([0.5, 1.0]))
    def test_instrumented(self, seed, q):
        rng = np.random.default_rng(seed)
        inst = gen_clique(float(rng.choice([0.1, 0.3])), int(rng.integers(2, 6)))
        n = inst.n_demands
        D = np.ascontiguousarray(inst.space.submatrix(tuple(range(inst.space.n_points))))
        loc_of = np.asarray(inst.demands, dtype=np.int_)
        C = len(inst.clusters)
        cluster_of = np.empty(n, dtype=np.int_)
        members = np.concatenate([c.demand_indices for c in inst.clusters]).astype(np.int_)
        offsets = np.cumsum([0] + [len(c.demand_indices) for c in inst.clusters]).astype(np.int_)
        for c, cl in enumerate(inst.clusters):
            cluster_of[list(cl.demand_indices)] = c
        dstar = cluster_distances(inst, inst.clusters)
        order = rng.permutation(n)
        u, u_ana = rng.random(n), rng.random(n)

        def call(mod):
            outs = [np.empty(C, dtype=np.int_), np.empty(C, dtype=np.int_)] + [np.empty(C) for _ in range(4)]
            res = mod.rofl_instrumented(D, order, loc_of, cluster_of, dstar, members, offsets, u, u_ana,
                                        q, False, 1.0, *outs)
            return res, outs

        ra, oa = call(kernels.compiled_backend)
        rb, ob = call(kernels.python_backend)
        assert ra == rb
        for x, y in zip(oa, ob):
            assert np.array_equal(x, y)


class TestSelection:
    def test_env_forces_fallback(self):
        code = "from onlinefl import kernels; print(kernels.BACKEND_NAME)"
        env = dict(os.environ, ONLINEFL_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"

    @needs_compiled
    def test_compiled_is_default(self):
        if os.environ.get("ONLINEFL_PURE_PYTHON"):
            pytest.skip("fallback forced by environment")
        assert kernels.BACKEND_NAME == "compiled"
