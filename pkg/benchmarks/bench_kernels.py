"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends get identical inputs; outputs are checked for bit equality
before timings are printed.
"""

import argparse
import time

import numpy as np

from onlinefl import kernels
from onlinefl.algorithms import compile_plan
from onlinefl.arrival import cluster_distances
from onlinefl.instances import gen_clique, gen_star


def _hub_args(k, rng):
    inst = gen_star(k)
    plan = compile_plan(inst)
    seq = np.ascontiguousarray(plan.loc_of[rng.permutation(inst.n_demands)])
    u = rng.random(seq.shape[0])
    return inst, plan, seq, u


def _outs(n):
    return np.empty(n), np.empty(n), np.empty(n, dtype=np.uint8), np.empty(n)


def time_call(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = fn()
        best = min(best, time.perf_counter() - t0)
    return best, res


def bench_hub(k, repeat):
    rng = np.random.default_rng(0)
    inst, plan, seq, u = _hub_args(k, rng)
    results = {}
    for name, mod in (("compiled", kernels.compiled_backend), ("python", kernels.python_backend)):
        if mod is None:
            continue
        outs = _outs(seq.shape[0])
        t, res = time_call(lambda: mod.rofl_hub(plan.data, seq, u, 1.0, False, 1.0, *outs), repeat)
        results[name] = (t, res, [o.copy() for o in outs])
    return results


def bench_matrix(delta, k, repeat):
    rng = np.random.default_rng(1)
    inst = gen_clique(delta, k)
    locs = tuple(range(k))
    D = np.ascontiguousarray(inst.space.submatrix(locs))
    seq = np.ascontiguousarray(np.asarray(inst.demands, dtype=np.int_)[rng.permutation(inst.n_demands)])
    u = rng.random(seq.shape[0])
    results = {}
    for name, mod in (("compiled", kernels.compiled_backend), ("python", kernels.python_backend)):
        if mod is None:
            continue
        outs = _outs(seq.shape[0])
        t, res = time_call(lambda: mod.rofl_matrix(D, seq, u, 0.5, False, 1.0, *outs), repeat)
        results[name] = (t, res, [o.copy() for o in outs])
    return results


def bench_instrumented(k, repeat):
    rng = np.random.default_rng(2)
    inst = gen_star(k)
    locs = tuple(range(k))
    D = np.ascontiguousarray(inst.space.submatrix(locs))
    n = inst.n_demands
    loc_of = np.arange(n)
    cluster_of = np.zeros(n, dtype=np.int_)
    members = np.arange(n)
    offsets = np.array([0, n])
    dstar = cluster_distances(inst, inst.clusters)
    order = rng.permutation(n)
    u, u_ana = rng.random(n), rng.random(n)
    results = {}
    for name, mod in (("compiled", kernels.compiled_backend), ("python", kernels.python_backend)):
        if mod is None:
            continue
        outs = [np.empty(1, dtype=np.int_), np.empty(1, dtype=np.int_)] + [np.empty(1) for _ in range(4)]
        t, res = time_call(lambda: mod.rofl_instrumented(D, order, loc_of, cluster_of, dstar, members, offsets,
                                                         u, u_ana, 1.0, False, 1.0, *outs), repeat)
        results[name] = (t, res, [o.copy() for o in outs])
    return results


def report(label, results):
    if set(results) == {"compiled", "python"}:
        c, p = results["compiled"], results["python"]
        same = c[1] == p[1] and all(np.array_equal(a, b) for a, b in zip(c[2], p[2]))
        print(f"{label:<34} compiled {c[0] * 1e3:9.3f} ms   python {p[0] * 1e3:9.3f} ms   "
              f"speedup {p[0] / c[0]:7.1f}x   identical={same}")
    else:
        (name, (t, _, _)), = results.items()
        print(f"{label:<34} {name} only {t * 1e3:9.3f} ms (compiled extension not built)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND_NAME}")
    report("hub kernel, star k=10000", bench_hub(10_000, args.repeat))
    report("matrix kernel, clique d=0.05 k=100", bench_matrix(0.05, 100, args.repeat))
    report("instrumented kernel, star k=200", bench_instrumented(200, args.repeat))


if __name__ == "__main__":
    main()
