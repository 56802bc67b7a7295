"""Monte Carlo estimation of expected cost and competitive ratio."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .algorithms import OpeningRule, compile_plan, rofl_cost, run_fotakis
from .arrival import (
    IID,
    Adversarial,
    PartialRandom,
    PartialRandomRandomAdv,
    UniformRandom,
    cluster_distances,
    order_sampler,
    resolve_clusters,
)
from .instances import Instance, fotakis_delta, gen_fotakis, gen_subset_iid, generate
from .offline import BudgetExceeded, solve_exact
from .seeding import trial_seeds, trial_streams

Z95 = 1.96
BOOTSTRAP_RESAMPLES = 1000
ABS_TOL = 1e-9


class NoClosedForm(LookupError):
    pass


class ExperimentError(RuntimeError):
    pass


# ------------------------------------------------------------------ closed forms


@dataclass(frozen=True)
class ClosedForm:
    alg: float
    alg_kind: str  # "exact" | "lower_bound"
    opt: float
    opt_kind: str  # "exact" | "upper_bound"
    note: str = ""
    derived: bool = False  # extrapolated beyond the published case

    @property
    def ratio(self) -> float:
        return self.alg / self.opt


def _g(rule: OpeningRule, x: float) -> float:
    return rule.prob(x, 1.0)


def closed_form(family: str, params: dict, rule: OpeningRule) -> ClosedForm:
    """Predicted expected cost and OPT for a generated family under ``rule``."""
    if family == "star" and rule.linear:
        k = int(params["k"])
        delta = 1.0 / (4.0 * math.sqrt(k))
        g = _g(rule, 2 * delta)
        alg = 1 + (k - 1) * (g + (1 - g) * 2 * delta)
        derived = not (rule.kind == "clamped_linear" and rule.q == 1.0)
        return ClosedForm(alg, "exact", 1 + k * delta, "upper_bound",
                          "each later demand pays g + (1 - g) * 2 delta", derived)
    if family == "clique" and rule.linear:
        k, delta = int(params["k"]), float(params["delta"])
        g = _g(rule, delta)
        alg = 1 + (k - 1) * (g + (1 - g) * delta) * (1 - (1 - g) ** k) / g
        return ClosedForm(alg, "exact", float(k), "upper_bound", "per location: geometric wait for an opening")
    if family == "subset_iid":
        n = int(params["n"])
        return ClosedForm(n - 1.0, "lower_bound", 1 + n / 2, "upper_bound", "any online algorithm")
    if family == "fotakis" and rule.kind == "fotakis_potential":
        n = int(params["n"])
        d = fotakis_delta(n)
        alg = 1 + (n - 1) * 3 * d / 2 - (n - 1) * d * d / 4
        return ClosedForm(alg, "exact", 1 + n * d / 2, "upper_bound", "adversarial tie-break")
    raise NoClosedForm(f"no closed form for family {family!r} under rule {rule.kind}")


# ------------------------------------------------------------------ bounds


def bound_value(name: str, q: float, rho: Optional[float] = None, n: Optional[int] = None) -> float:
    if name == "random_order":
        return (1 + q) * max(2.0, 1 / q)
    if name == "partial_adversarial":
        return (1 + q) * max(3 / rho - 1, (2 / rho - 1) / q)
    if name == "partial_random_adversarial":
        return (1 + q) * max(4 - 2 * rho, (2 / rho - 1) / q)
    if name == "iid_lower":
        return (n - 1) / (1 + n / 2)
    raise KeyError(f"unknown bound {name!r}")


BOUND_DIRECTION = {
    "random_order": "upper",
    "partial_adversarial": "upper",
    "partial_random_adversarial": "upper",
    "iid_lower": "lower",
}


@dataclass(frozen=True)
class BoundCheck:
    name: str
    direction: str
    bound: float
    empirical: float
    tolerance: float
    passed: bool


# ------------------------------------------------------------------ experiments


@dataclass
class ExperimentSpec:
    instance: Optional[Instance] = None
    family: Optional[str] = None
    params: dict = field(default_factory=dict)
    arrival: object = None  # default: uniform (adversarial for fotakis, iid for subset_iid)
    rule: OpeningRule = field(default_factory=lambda: OpeningRule("clamped_linear", 0.5))
    trials: int = 1000
    seed: int = 0
    opt_mode: str = "exact"  # "exact" | "analytic"
    instrumentation: bool = False
    threads: Optional[int] = None
    tie_break: str = "lowest"
    bounds: Optional[tuple] = None  # None: pick from the arrival model
    experiment_id: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.opt_mode not in ("exact", "analytic"):
            raise ValueError("opt_mode must be 'exact' or 'analytic'")
        if self.instance is None and self.family is None:
            raise ValueError("give an instance or a generator family")


@dataclass
class EstimateReport:
    experiment_id: str
    family: str
    params: dict
    rule_kind: str
    q: float
    arrival_model: str
    rho: Optional[float]
    interleaver: Optional[str]
    trials: int
    seed: int
    mean_cost: float
    stderr: float
    ci95_low: float
    ci95_high: float
    opt_value: float
    opt_kind: str
    ratio: float
    ratio_stderr: float
    ratio_ci_low: float
    ratio_ci_high: float
    trial_seeds: list
    closed_form: Optional[ClosedForm] = None
    bound_checks: tuple = ()
    instrumentation: Optional[dict] = None
    costs: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    opts: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        doc = {k: v for k, v in asdict(self).items() if k not in ("costs", "opts", "closed_form", "bound_checks")}
        doc["closed_form"] = asdict(self.closed_form) if self.closed_form else None
        doc["bound_checks"] = [asdict(b) for b in self.bound_checks]
        return doc

    def csv_rows(self) -> list:
        base = {
            "experiment_id": self.experiment_id,
            "family": self.family,
            "params": json.dumps(self.params, sort_keys=True, separators=(",", ":")),
            "rule_kind": self.rule_kind,
            "q": self.q,
            "arrival_model": self.arrival_model,
            "rho": "" if self.rho is None else self.rho,
            "interleaver": self.interleaver or "",
            "trials": self.trials,
            "seed": self.seed,
            "mean_cost": repr(self.mean_cost),
            "stderr": repr(self.stderr),
            "ci95_low": repr(self.ci95_low),
            "ci95_high": repr(self.ci95_high),
            "opt_value": repr(self.opt_value),
            "opt_kind": self.opt_kind,
            "ratio": repr(self.ratio),
            "ratio_ci_low": repr(self.ratio_ci_low),
            "ratio_ci_high": repr(self.ratio_ci_high),
        }
        if not self.bound_checks:
            return [dict(base, bound_name="", bound_value="", bound_pass="")]
        return [dict(base, bound_name=b.name, bound_value=repr(b.bound), bound_pass=b.passed)
                for b in self.bound_checks]


CSV_COLUMNS = [
    "experiment_id", "family", "params", "rule_kind", "q", "arrival_model", "rho", "interleaver",
    "trials", "seed", "mean_cost", "stderr", "ci95_low", "ci95_high", "opt_value", "opt_kind",
    "ratio", "ratio_ci_low", "ratio_ci_high", "bound_name", "bound_value", "bound_pass",
]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerows(r.csv_rows())
    return buf.getvalue()


def _resolve(spec: ExperimentSpec):
    """Instance, arrival model, and (for i.i.d. runs) the template's distribution."""
    family = spec.family
    params = dict(spec.params)
    inst = spec.instance
    dist = None
    if inst is None:
        if family == "subset_iid":
            inst, dist = gen_subset_iid(int(params["n"]))
        elif family == "fotakis":
            inst, _ = gen_fotakis(int(params["n"]))
        else:
            inst = generate(family, **params)
    else:
        family = family or inst.family
        params = params or inst.param_dict
        if inst.family == "subset_iid":
            _, dist = gen_subset_iid(int(inst.param_dict["n"]))
    model = spec.arrival
    if model is None:
        if dist is not None:
            model = IID(dist, int(params["n"]))
        elif family == "fotakis":
            model = Adversarial()
        else:
            model = UniformRandom()
    return inst, family or "custom", params, model


def _default_bounds(model, rule: OpeningRule) -> tuple:
    if not rule.linear:
        return ()
    if isinstance(model, UniformRandom):
        return ("random_order",)
    if isinstance(model, PartialRandom):
        return ("partial_adversarial",)
    if isinstance(model, PartialRandomRandomAdv):
        return ("partial_random_adversarial",)
    if isinstance(model, IID):
        return ("iid_lower",)
    return ()


def _chunks(n: int, threads: int):
    threads = max(1, min(threads, n))
    edges = np.linspace(0, n, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _parallel(fn, n: int, threads: Optional[int]):
    threads = threads or os.cpu_count() or 1
    parts = _chunks(n, threads)
    if len(parts) == 1:
        fn(*parts[0])
        return
    with ThreadPoolExecutor(max_workers=len(parts)) as ex:
        for fut in [ex.submit(fn, a, b) for a, b in parts]:
            fut.result()


def run_trials(spec: ExperimentSpec):
    """Per-trial costs (and per-trial OPT for i.i.d. runs), in trial-index order."""
    inst, family, params, model = _resolve(spec)
    rule = spec.rule
    seeds = trial_seeds(spec.seed, spec.trials)
    costs = np.empty(spec.trials)
    iid = isinstance(model, IID)
    opts = np.empty(spec.trials) if iid else None
    sampler = order_sampler(inst, model)
    plan = compile_plan(inst) if rule.linear and not iid else None
    if iid and spec.opt_mode == "analytic" and inst.known_opt is None:
        raise ExperimentError("analytic OPT requested but the instance has no known bound")

    def work(lo, hi):
        for i in range(lo, hi):
            st = trial_streams(seeds[i])
            order = sampler(st.order)
            if iid:
                trial_inst = inst.with_demands(order)
                order = np.arange(len(order))
                if spec.opt_mode == "exact":
                    opts[i] = solve_exact(trial_inst).total
                else:
                    opts[i] = inst.known_opt.value
            else:
                trial_inst = inst
            if rule.linear:
                p = plan if plan is not None else compile_plan(trial_inst)
                costs[i] = rofl_cost(p, order, st.coins.random(order.shape[0]), rule)
            else:
                costs[i] = run_fotakis(trial_inst, order, tie_break=spec.tie_break).grand_total

    _parallel(work, spec.trials, spec.threads)
    return inst, family, params, model, seeds, costs, opts


def _mean_stderr(x: np.ndarray):
    n = x.shape[0]
    mean = float(np.sum(x) / n)
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(x, ddof=1) / math.sqrt(n))


def _bootstrap_ratio(costs, opts, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, len(costs), 0xB0075]))
    n = len(costs)
    ratios = np.empty(BOOTSTRAP_RESAMPLES)
    for b in range(BOOTSTRAP_RESAMPLES):
        idx = rng.integers(0, n, size=n)
        ratios[b] = costs[idx].sum() / opts[idx].sum()
    lo, hi = np.percentile(ratios, [2.5, 97.5])
    return float(np.std(ratios, ddof=1)), float(lo), float(hi)


def estimate(spec: ExperimentSpec) -> EstimateReport:
    """Run the experiment and summarize it. Deterministic given ``spec``."""
    inst, family, params, model, seeds, costs, opts = run_trials(spec)
    rule = spec.rule
    mean, se = _mean_stderr(costs)
    if opts is not None:
        opt_value = float(np.sum(opts) / len(opts))
        opt_kind = "exact_mean" if spec.opt_mode == "exact" else "upper_bound"
        ratio = mean / opt_value
        if spec.trials > 1 and spec.opt_mode == "exact":
            r_se, r_lo, r_hi = _bootstrap_ratio(costs, opts, spec.seed)
        else:
            r_se = se / opt_value
            r_lo, r_hi = ratio - Z95 * r_se, ratio + Z95 * r_se
    else:
        if spec.opt_mode == "exact":
            try:
                opt_value, opt_kind = solve_exact(inst).total, "exact"
            except BudgetExceeded as exc:
                raise ExperimentError(f"{exc}. Retry with opt_mode='analytic'") from None
        else:
            if inst.known_opt is None:
                raise ExperimentError("analytic OPT requested but the instance has no known bound")
            opt_value, opt_kind = inst.known_opt.value, inst.known_opt.kind
        ratio = mean / opt_value
        r_se = se / opt_value
        r_lo, r_hi = ratio - Z95 * r_se, ratio + Z95 * r_se
    try:
        cf = closed_form(family, params, rule)
    except (NoClosedForm, KeyError):
        cf = None
    report = EstimateReport(
        experiment_id=spec.experiment_id,
        family=family,
        params=params,
        rule_kind=rule.kind,
        q=rule.q,
        arrival_model=getattr(model, "name", type(model).__name__),
        rho=getattr(model, "rho", None),
        interleaver=getattr(model, "interleaver", None),
        trials=spec.trials,
        seed=spec.seed,
        mean_cost=mean,
        stderr=se,
        ci95_low=mean - Z95 * se,
        ci95_high=mean + Z95 * se,
        opt_value=float(opt_value),
        opt_kind=opt_kind,
        ratio=ratio,
        ratio_stderr=r_se,
        ratio_ci_low=r_lo,
        ratio_ci_high=r_hi,
        trial_seeds=[str(s) for s in seeds],
        closed_form=cf,
        costs=costs,
        opts=opts,
    )
    names = spec.bounds if spec.bounds is not None else _default_bounds(model, rule)
    if names:
        n = getattr(model, "n", None)
        report = bound_check(report, names, n=n)
    if spec.instrumentation:
        if not isinstance(model, UniformRandom) or not rule.linear:
            raise ExperimentError("instrumentation needs uniform arrival order and a linear rule")
        summary = instrument_analysis(inst, rule, spec.trials, spec.seed, threads=spec.threads)
        report.instrumentation = summary.to_json()
    return report


def bound_check(report: EstimateReport, names, n: Optional[int] = None) -> EstimateReport:
    """Evaluate each named bound at the report's (q, rho) and record pass or fail."""
    checks = list(report.bound_checks)
    tol = 3 * report.ratio_stderr + ABS_TOL
    for name in names:
        if name not in BOUND_DIRECTION:
            raise KeyError(f"unknown bound {name!r}")
        if name.startswith("partial") and report.rho is None:
            raise ValueError(f"bound {name!r} needs rho")
        if name == "iid_lower":
            n = n if n is not None else int(report.params["n"])
        value = bound_value(name, report.q, report.rho, n)
        if BOUND_DIRECTION[name] == "upper":
            ok = report.ratio <= value + tol
        else:
            ok = report.ratio >= value - tol
        checks.append(BoundCheck(name, BOUND_DIRECTION[name], value, report.ratio, tol, bool(ok)))
    return replace(report, bound_checks=tuple(checks))


# ------------------------------------------------------------------ analysis instrumentation


@dataclass(frozen=True)
class AnalysisCheck:
    name: str
    cluster: int
    lhs: float
    rhs: float
    stderr: float  # of the per-trial difference lhs - rhs
    passed: bool


@dataclass
class InstrumentationSummary:
    """Per-trial, per-cluster quantities of the balanced-opening analysis.

    Arrays have shape ``(trials, clusters)``. ``T`` is 1-based, with
    ``n + 1`` meaning no balanced opening happened.
    """

    q: float
    facility_cost: float
    n_demands: int
    T: np.ndarray
    remaining: np.ndarray  # |C_T|
    d_vT: np.ndarray
    sum_remaining: np.ndarray  # sum of d* over C_T
    sum_p_upto: np.ndarray  # sum of p over arrivals up to T
    sum_d_upto: np.ndarray  # sum of d* over arrivals up to T
    costs: np.ndarray

    @property
    def n_clusters(self) -> int:
        return self.T.shape[1]

    def checks(self) -> list:
        out = []
        n = self.T.shape[0]
        for c in range(self.n_clusters):
            lhs = self.remaining[:, c] * self.d_vT[:, c]
            rhs = self.sum_remaining[:, c]
            diff = lhs - rhs
            se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            lm, rm = float(lhs.sum() / n), float(rhs.sum() / n)
            out.append(AnalysisCheck("balanced_center_distance", c, lm, rm, se, lm <= rm + 3 * se + ABS_TOL))

            lhs = self.sum_p_upto[:, c]
            rhs_t = 1 + 2 * self.q * self.sum_d_upto[:, c] / self.facility_cost
            diff = lhs - rhs_t
            se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            lm, rm = float(lhs.sum() / n), float(rhs_t.sum() / n)
            out.append(AnalysisCheck("probability_until_balanced", c, lm, rm, se, lm <= rm + 3 * se + ABS_TOL))
        return out

    def to_json(self) -> dict:
        return {
            "trials": int(self.T.shape[0]),
            "clusters": self.n_clusters,
            "mean_T": [float(x) for x in self.T.mean(axis=0)],
            "checks": [asdict(c) for c in self.checks()],
        }


def instrument_analysis(instance: Instance, rule: OpeningRule, trials: int, seed: int,
                        clusters=None, threads: Optional[int] = None) -> InstrumentationSummary:
    """Replay uniform-order runs while flipping the analysis coin.

    Uses the same per-trial streams as :func:`estimate`, so the algorithm's
    decisions, and hence its costs, are identical to the plain runs.
    """
    if not rule.linear:
        raise ValueError("instrumentation needs a linear rule")
    if clusters is None:
        if instance.clusters is None:
            try:
                clusters = resolve_clusters(instance)
            except Exception as exc:
                raise ExperimentError(f"instrumentation needs clusters: {exc}") from None
        else:
            clusters = instance.clusters
    n = instance.n_demands
    plan = compile_plan(instance)
    if plan.kind == "hub":
        # the instrumented kernel works on a location matrix
        locs = tuple(sorted(set(instance.demands)))
        index = {d: i for i, d in enumerate(locs)}
        D = np.ascontiguousarray(instance.space.submatrix(locs))
        loc_of = np.array([index[d] for d in instance.demands], dtype=np.int_)
    else:
        D, loc_of = plan.data, plan.loc_of
    C = len(clusters)
    cluster_of = np.empty(n, dtype=np.int_)
    members = np.empty(n, dtype=np.int_)
    offsets = np.zeros(C + 1, dtype=np.int_)
    pos = 0
    for c, cl in enumerate(clusters):
        for i in cl.demand_indices:
            cluster_of[i] = c
            members[pos] = i
            pos += 1
        offsets[c + 1] = pos
    dstar = cluster_distances(instance, clusters)
    seeds = trial_seeds(seed, trials)
    out = {k: np.empty((trials, C), dtype=np.int_ if k in ("T", "size") else float)
           for k in ("T", "size", "dvt", "sum_ct", "p_before", "d_before")}
    costs = np.empty(trials)
    f = float(instance.facility_cost)

    def work(lo, hi):
        bufs = {k: np.empty(C, dtype=v.dtype) for k, v in out.items()}
        for i in range(lo, hi):
            st = trial_streams(seeds[i])
            order = st.order.permutation(n)
            u = st.coins.random(n)
            u_ana = st.analysis.random(n)
            n_open, total = kernels.rofl_instrumented(
                D, order, loc_of, cluster_of, dstar, members, offsets, u, u_ana,
                float(rule.q), rule.piecewise, f,
                bufs["T"], bufs["size"], bufs["dvt"], bufs["sum_ct"], bufs["p_before"], bufs["d_before"],
            )
            for k, v in bufs.items():
                out[k][i] = v
            costs[i] = n_open * f + total

    _parallel(work, trials, threads)
    return InstrumentationSummary(
        q=rule.q,
        facility_cost=f,
        n_demands=n,
        T=out["T"] + 1,
        remaining=out["size"],
        d_vT=out["dvt"],
        sum_remaining=out["sum_ct"],
        sum_p_upto=out["p_before"],
        sum_d_upto=out["d_before"],
        costs=costs,
    )
