"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .algorithms import OpeningRule, run_fotakis, run_rofl
from .arrival import (
    IID,
    Adversarial,
    ArrivalError,
    PartialRandom,
    PartialRandomRandomAdv,
    UniformRandom,
    make_order,
)
from .harness import ExperimentError, ExperimentSpec, estimate, reports_to_csv
from .instances import (
    InstanceLoadError,
    ParameterError,
    dumps_instance,
    gen_fotakis,
    gen_subset_iid,
    generate,
    load_instance,
)
from .metric import DescriptorError
from .offline import BudgetExceeded, solve_exact
from .seeding import trial_seed, trial_streams

RULES = {"clamped": "clamped_linear", "piecewise": "piecewise_linear", "fotakis": "fotakis_potential"}
ORDERS = ("adversarial", "uniform", "iid", "partial", "partial-rand")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(text: str, path) -> None:
    """Write to stdout, or atomically to ``path`` so failures leave no partial file."""
    if path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".onlinefl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _family_params(args) -> dict:
    fam = args.family
    need = {"star": ("k",), "clique": ("delta", "k"), "subset_iid": ("n",), "fotakis": ("n",)}
    if fam not in need:
        raise UsageError(f"unknown family {fam!r}; choose from {sorted(need)}")
    params = {}
    for name in need[fam]:
        value = getattr(args, name)
        if value is None:
            raise UsageError(f"--family {fam} needs --{name}")
        params[name] = value
    return params


def _instance_from_args(args):
    if getattr(args, "instance", None):
        try:
            with open(args.instance, encoding="utf-8") as fh:
                return load_instance(fh.read())
        except FileNotFoundError:
            raise ExperimentError(f"instance file not found: {args.instance}") from None
    if getattr(args, "family", None):
        params = _family_params(args)
        if args.family == "subset_iid":
            return gen_subset_iid(params["n"])[0]
        if args.family == "fotakis":
            return gen_fotakis(params["n"])[0]
        return generate(args.family, **params)
    raise UsageError("give --instance PATH or --family with its parameters")


def _rule(args) -> OpeningRule:
    return OpeningRule(RULES[args.rule], args.q if args.rule != "fotakis" else 1.0)


def _model(args, instance):
    order = args.order
    if order is None:
        return None
    if order == "adversarial":
        return Adversarial()
    if order == "uniform":
        return UniformRandom()
    if order == "iid":
        if instance.family != "subset_iid":
            raise UsageError("--order iid needs the subset_iid family")
        n = int(instance.param_dict["n"])
        return IID(gen_subset_iid(n)[1], n)
    if args.rho is None:
        raise UsageError(f"--order {order} needs --rho")
    if order == "partial":
        return PartialRandom(args.rho, interleaver=args.interleaver)
    return PartialRandomRandomAdv(args.rho, interleaver=args.interleaver)


def _add_instance_flags(p):
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--family", choices=["star", "clique", "subset_iid", "fotakis"])
    p.add_argument("--k", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--n", type=int)


def _add_run_flags(p):
    p.add_argument("--rule", choices=sorted(RULES), default="clamped")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--order", choices=ORDERS)
    p.add_argument("--rho", type=float)
    p.add_argument("--interleaver", default="cluster-blocks")
    p.add_argument("--tie-break", choices=["lowest", "adversarial"], default="lowest")
    p.add_argument("--seed", type=int, default=0)


def _add_estimate_flags(p):
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    p.add_argument("--opt", choices=["exact", "analytic"], default="exact")
    p.add_argument("--instrument", action="store_true")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("-o", "--output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="onlinefl", description="Online facility location experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate an instance")
    _add_instance_flags(p)
    p.add_argument("--materialize", action="store_true", help="write hub metrics as explicit matrices")
    p.add_argument("-o", "--output")

    p = sub.add_parser("opt", help="exact offline optimum")
    _add_instance_flags(p)
    p.add_argument("--candidates", help="comma-separated point ids to restrict facility locations")
    p.add_argument("--budget", type=int, default=24)
    p.add_argument("-o", "--output")

    p = sub.add_parser("run", help="one online execution, printed as JSON")
    _add_instance_flags(p)
    _add_run_flags(p)
    p.add_argument("--trial", type=int, default=0, help="replay this trial index of an estimate")
    p.add_argument("-o", "--output")

    p = sub.add_parser("estimate", help="Monte Carlo estimate of cost and ratio")
    _add_instance_flags(p)
    _add_run_flags(p)
    _add_estimate_flags(p)
    p.add_argument("--experiment", help="experiment JSON file (overrides the matching flags)")
    p.add_argument("--id", default="", help="experiment id for the output rows")

    p = sub.add_parser("sweep", help="one estimate per grid value")
    _add_instance_flags(p)
    _add_run_flags(p)
    _add_estimate_flags(p)
    p.add_argument("--axis", choices=["q", "rho", "k"], required=True)
    p.add_argument("--values", required=True, help="comma-separated grid")
    return parser


def _parse_values(text: str, cast):
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse --values {text!r}") from None


def _spec(args, instance, experiment_id="") -> ExperimentSpec:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    return ExperimentSpec(
        instance=instance,
        arrival=_model(args, instance),
        rule=_rule(args),
        trials=args.trials,
        seed=args.seed,
        opt_mode=args.opt,
        instrumentation=args.instrument,
        threads=args.threads,
        tie_break=args.tie_break,
        experiment_id=experiment_id,
    )


def _apply_experiment_file(args):
    with open(args.experiment, encoding="utf-8") as fh:
        doc = json.load(fh)
    inst = doc.get("instance")
    if isinstance(inst, str):
        args.instance = os.path.join(os.path.dirname(os.path.abspath(args.experiment)), inst)
    elif isinstance(inst, dict):
        args.family = inst.get("family")
        for key in ("k", "delta", "n"):
            if key in inst:
                setattr(args, key, inst[key])
    arrival = doc.get("arrival")
    if arrival:
        names = {"partial_random_adv": "partial-rand"}
        args.order = names.get(arrival["model"], arrival["model"])
        args.rho = arrival.get("rho", args.rho)
        args.interleaver = arrival.get("interleaver", args.interleaver)
    rule = doc.get("rule")
    if rule:
        kinds = {v: k for k, v in RULES.items()}
        args.rule = kinds.get(rule.get("kind"), rule.get("kind", args.rule))
        args.q = rule.get("q", args.q)
    for key, attr in (("trials", "trials"), ("seed", "seed"), ("opt_mode", "opt"), ("instrumentation", "instrument")):
        if key in doc:
            setattr(args, attr, doc[key])
    args.id = doc.get("experiment_id", args.id)


def _format_reports(reports, fmt: str) -> str:
    if fmt == "json":
        docs = [r.to_json() for r in reports]
        return json.dumps(docs[0] if len(docs) == 1 else docs, indent=2)
    return reports_to_csv(reports)


def cmd_gen(args):
    instance = _instance_from_args(args)
    _write(dumps_instance(instance, materialize=args.materialize), args.output)


def cmd_opt(args):
    instance = _instance_from_args(args)
    cands = None
    if args.candidates:
        cands = _parse_values(args.candidates, int)
    sol = solve_exact(instance, cands, budget=args.budget)
    _write(json.dumps(sol.to_json()), args.output)


def cmd_run(args):
    instance = _instance_from_args(args)
    rule = _rule(args)
    model = _model(args, instance)
    if model is None:
        model = Adversarial() if instance.family == "fotakis" else UniformRandom()
    streams = trial_streams(trial_seed(args.seed, args.trial))
    order = make_order(instance, model, streams.order)
    if isinstance(model, IID):
        instance = instance.with_demands(order)
        order = np.arange(len(order))
    if rule.linear:
        rec = run_rofl(instance, order, rule, streams.coins)
    else:
        rec = run_fotakis(instance, order, tie_break=args.tie_break)
    _write(json.dumps(rec.to_json()), args.output)


def cmd_estimate(args):
    if args.experiment:
        _apply_experiment_file(args)
    instance = _instance_from_args(args)
    report = estimate(_spec(args, instance, args.id))
    _write(_format_reports([report], args.format), args.output)


def cmd_sweep(args):
    cast = int if args.axis == "k" else float
    values = _parse_values(args.values, cast)
    if not values:
        raise UsageError("--values is empty")
    reports = []
    for v in values:
        setattr(args, args.axis, v)
        if args.axis == "rho" and args.order not in ("partial", "partial-rand"):
            raise UsageError("--axis rho needs --order partial or partial-rand")
        instance = _instance_from_args(args)
        reports.append(estimate(_spec(args, instance, f"sweep-{args.axis}={v}")))
    _write(_format_reports(reports, args.format), args.output)


COMMANDS = {"gen": cmd_gen, "opt": cmd_opt, "run": cmd_run, "estimate": cmd_estimate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ParameterError, ArrivalError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (InstanceLoadError, BudgetExceeded, ExperimentError, DescriptorError, OSError,
            json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
