"""Instance families and the instance JSON format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .metric import (
    Descriptor,
    EuclideanMetric,
    ExplicitMetric,
    HubMetric,
    MetricSpace,
    SubsetPointsMetric,
    validate,
)

SCHEMA_VERSION = 1


class ParameterError(ValueError):
    """Generator parameters outside the family's domain."""


class InstanceLoadError(ValueError):
    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass(frozen=True)
class KnownOpt:
    value: float
    kind: str  # "exact" | "upper_bound"
    note: str = ""


@dataclass(frozen=True)
class Cluster:
    center: Descriptor
    demand_indices: tuple


@dataclass(frozen=True)
class Instance:
    space: MetricSpace
    demands: tuple
    facility_cost: float = 1.0
    known_opt: Optional[KnownOpt] = None
    clusters: Optional[tuple] = None
    family: Optional[str] = None
    params: tuple = ()  # sorted (name, value) pairs of the generator call

    def __post_init__(self):
        if not self.facility_cost > 0:
            raise ValueError("facility_cost must be positive")
        object.__setattr__(self, "demands", tuple(self.space.check(d) for d in self.demands))
        if self.clusters is not None:
            seen = sorted(i for c in self.clusters for i in c.demand_indices)
            if seen != list(range(len(self.demands))):
                raise ValueError("clusters must partition the demand indices exactly")
            for c in self.clusters:
                self.space.check(c.center)

    @property
    def n_demands(self) -> int:
        return len(self.demands)

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    def with_demands(self, demands: Sequence[Descriptor], **changes) -> "Instance":
        """Same space and cost with a new demand list (clusters dropped)."""
        kw = dict(
            space=self.space,
            demands=tuple(demands),
            facility_cost=self.facility_cost,
            known_opt=self.known_opt,
            clusters=None,
            family=self.family,
            params=self.params,
        )
        kw.update(changes)
        return Instance(**kw)


@dataclass(frozen=True)
class IIDDistribution:
    """Probability vector over a list of points."""

    points: tuple
    probs: np.ndarray = field(compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(self.points),) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("distribution must be a non-negative vector summing to 1")
        object.__setattr__(self, "probs", p)

    def sample(self, rng: np.random.Generator, n: int) -> tuple:
        idx = rng.choice(len(self.points), size=n, p=self.probs)
        return tuple(self.points[i] for i in idx)


def _params(**kw) -> tuple:
    return tuple(sorted(kw.items()))


def gen_star(k: int) -> Instance:
    """k demands pairwise 2*delta apart, all delta from an unrequested center.

    Points ``0..k-1`` are the demands, point ``k`` is the center, and
    ``delta = 1/(4 sqrt(k))``.
    """
    if not isinstance(k, (int, np.integer)) or k < 2:
        raise ParameterError(f"star needs integer k >= 2, got {k!r}")
    k = int(k)
    delta = 1.0 / (4.0 * math.sqrt(k))
    space = HubMetric([delta] * k + [0.0])
    return Instance(
        space=space,
        demands=tuple(range(k)),
        known_opt=KnownOpt(1.0 + k * delta, "upper_bound", "open the center only: 1 + k*delta"),
        clusters=(Cluster(k, tuple(range(k))),),
        family="star",
        params=_params(k=k),
    )


def gen_clique(delta: float, k: int) -> Instance:
    """k points pairwise delta apart with k co-located demands at each."""
    if not isinstance(k, (int, np.integer)) or k < 2:
        raise ParameterError(f"clique needs integer k >= 2, got {k!r}")
    if not 0 < delta < 1:
        raise ParameterError(f"clique needs 0 < delta < 1, got {delta!r}")
    k = int(k)
    space = HubMetric([delta / 2] * k)
    demands = tuple(j for j in range(k) for _ in range(k))
    clusters = tuple(Cluster(j, tuple(range(j * k, (j + 1) * k))) for j in range(k))
    return Instance(
        space=space,
        demands=demands,
        known_opt=KnownOpt(float(k), "upper_bound", "one facility per point: k"),
        clusters=clusters,
        family="clique",
        params=_params(delta=float(delta), k=k),
    )


def gen_subset_iid(n: int):
    """Template instance and uniform distribution for the i.i.d. lower bound.

    ``m = n**2`` x-points, subset points of size ``n``, unit scale. The
    template carries no demands; each trial draws ``n`` of them.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ParameterError(f"subset_iid needs integer n >= 2, got {n!r}")
    n = int(n)
    m = n * n
    space = SubsetPointsMetric(m=m, subset_size=n, delta=1.0)
    template = Instance(
        space=space,
        demands=(),
        known_opt=KnownOpt(1.0 + n / 2, "upper_bound", "a covering subset point serves every draw at 1/2"),
        family="subset_iid",
        params=_params(n=n),
    )
    dist = IIDDistribution(tuple(range(m)), np.full(m, 1.0 / m))
    return template, dist


def fotakis_delta(n: int) -> float:
    """``1/sqrt(n-1)`` when n-1 = 4t^2 for some integer t >= 1, else ParameterError."""
    if not isinstance(n, (int, np.integer)) or n < 5:
        raise ParameterError(f"fotakis needs integer n >= 5, got {n!r}")
    s = math.isqrt(int(n) - 1)
    if s * s != n - 1 or s % 2:
        raise ParameterError(f"fotakis needs n - 1 = 4t^2 (e.g. 5, 17, 37, 65), got n={n}")
    return 1.0 / s


def gen_fotakis(n: int):
    """Scaled subset-point space with ``m = 2n`` and demands x_0..x_{n-1} in order."""
    delta = fotakis_delta(n)
    n = int(n)
    space = SubsetPointsMetric(m=2 * n, subset_size=n, delta=delta)
    inst = Instance(
        space=space,
        demands=tuple(range(n)),
        known_opt=KnownOpt(1.0 + n * delta / 2, "upper_bound", "one subset point covering every demand"),
        family="fotakis",
        params=_params(n=n),
    )
    return inst, tuple(range(n))


def generate(family: str, **params):
    """Dispatch by family name; returns an Instance (template for subset_iid)."""
    if family == "star":
        return gen_star(int(params["k"]))
    if family == "clique":
        return gen_clique(float(params["delta"]), int(params["k"]))
    if family == "subset_iid":
        return gen_subset_iid(int(params["n"]))[0]
    if family == "fotakis":
        return gen_fotakis(int(params["n"]))[0]
    raise ParameterError(f"unknown family {family!r}")


# ---------------------------------------------------------------- JSON format

_DESCRIPTOR = {
    "oneOf": [
        {"type": "object", "required": ["x"], "properties": {"x": {"type": "integer", "minimum": 0}},
         "additionalProperties": False},
        {"type": "object", "required": ["s"],
         "properties": {"s": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
         "additionalProperties": False},
    ]
}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["version", "facility_cost", "metric", "demands"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "facility_cost": {"type": "number", "exclusiveMinimum": 0},
        "metric": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["explicit", "euclidean", "subset_points", "hub"]}},
            "allOf": [
                {"if": {"properties": {"type": {"const": "explicit"}}},
                 "then": {"required": ["n", "distances"],
                          "properties": {"n": {"type": "integer", "minimum": 0},
                                         "distances": {"type": "array",
                                                       "items": {"type": "array", "items": {"type": "number"}}}}}},
                {"if": {"properties": {"type": {"const": "euclidean"}}},
                 "then": {"required": ["points"],
                          "properties": {"points": {"type": "array",
                                                    "items": {"type": "array", "items": {"type": "number"}}}}}},
                {"if": {"properties": {"type": {"const": "subset_points"}}},
                 "then": {"required": ["m", "subset_size", "delta"],
                          "properties": {"m": {"type": "integer", "minimum": 1},
                                         "subset_size": {"type": "integer", "minimum": 1},
                                         "delta": {"type": "number", "exclusiveMinimum": 0}}}},
                {"if": {"properties": {"type": {"const": "hub"}}},
                 "then": {"required": ["weights"],
                          "properties": {"weights": {"type": "array", "items": {"type": "number", "minimum": 0}}}}},
            ],
        },
        "demands": {"type": "array", "items": _DESCRIPTOR},
        "known_opt": {
            "type": "object",
            "required": ["value", "kind"],
            "properties": {"value": {"type": "number"}, "kind": {"enum": ["exact", "upper_bound"]},
                           "note": {"type": "string"}},
        },
        "clusters": {
            "type": "array",
            "items": {"type": "object", "required": ["center", "demand_indices"],
                      "properties": {"center": _DESCRIPTOR,
                                     "demand_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}}}},
        },
        "generator": {"type": "object", "required": ["family"], "properties": {"family": {"type": "string"}}},
    },
}


def descriptor_to_json(d: Descriptor) -> dict:
    if isinstance(d, tuple):
        return {"s": list(d)}
    return {"x": int(d)}


def descriptor_from_json(obj: dict) -> Descriptor:
    if "s" in obj:
        return tuple(obj["s"])
    return int(obj["x"])


def metric_to_json(space: MetricSpace) -> dict:
    if isinstance(space, ExplicitMetric):
        return {"type": "explicit", "n": space.n_points, "distances": space.dist.tolist()}
    if isinstance(space, EuclideanMetric):
        return {"type": "euclidean", "points": space.coords.tolist()}
    if isinstance(space, HubMetric):
        return {"type": "hub", "weights": space.weights.tolist()}
    if isinstance(space, SubsetPointsMetric):
        return {"type": "subset_points", "m": space.m, "subset_size": space.subset_size, "delta": space.delta}
    raise TypeError(f"cannot serialize {type(space).__name__}")


def save_instance(instance: Instance, materialize: bool = False) -> dict:
    """JSON-ready document. ``materialize`` writes hub metrics as explicit matrices."""
    space = instance.space
    if materialize and isinstance(space, HubMetric):
        space = space.to_explicit()
    doc = {
        "version": SCHEMA_VERSION,
        "facility_cost": instance.facility_cost,
        "metric": metric_to_json(space),
        "demands": [descriptor_to_json(d) for d in instance.demands],
    }
    if instance.known_opt is not None:
        k = instance.known_opt
        doc["known_opt"] = {"value": k.value, "kind": k.kind, "note": k.note}
    if instance.clusters is not None:
        doc["clusters"] = [
            {"center": descriptor_to_json(c.center), "demand_indices": list(c.demand_indices)}
            for c in instance.clusters
        ]
    if instance.family is not None:
        doc["generator"] = {"family": instance.family, **dict(instance.params)}
    return doc


def dumps_instance(instance: Instance, **kw) -> str:
    return json.dumps(save_instance(instance, **kw))


def load_instance(doc) -> Instance:
    """Parse and validate an instance document (dict or JSON text)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise InstanceLoadError(f"line {exc.lineno} col {exc.colno}", f"invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(INSTANCE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise InstanceLoadError(err.json_path, err.message)

    m = doc["metric"]
    try:
        if m["type"] == "explicit":
            dist = np.array(m["distances"], dtype=float).reshape(-1, m["n"]) if m["n"] else np.zeros((0, 0))
            if dist.shape != (m["n"], m["n"]):
                raise ValueError(f"distances must be {m['n']}x{m['n']}")
            space = ExplicitMetric(dist)
        elif m["type"] == "euclidean":
            space = EuclideanMetric(m["points"])
        elif m["type"] == "hub":
            space = HubMetric(m["weights"])
        else:
            space = SubsetPointsMetric(m["m"], m["subset_size"], float(m["delta"]))
    except ValueError as exc:
        raise InstanceLoadError("$.metric", str(exc)) from None

    report = validate(space)
    if not report.ok:
        raise InstanceLoadError("$.metric", f"metric axioms violated: {report.summary()}")

    def desc(obj, where):
        try:
            return space.check(descriptor_from_json(obj))
        except IndexError as exc:
            raise InstanceLoadError(where, str(exc)) from None

    demands = tuple(desc(d, f"$.demands[{i}]") for i, d in enumerate(doc["demands"]))
    known = None
    if "known_opt" in doc:
        k = doc["known_opt"]
        known = KnownOpt(float(k["value"]), k["kind"], k.get("note", ""))
    clusters = None
    if "clusters" in doc:
        clusters = tuple(
            Cluster(desc(c["center"], f"$.clusters[{i}].center"), tuple(c["demand_indices"]))
            for i, c in enumerate(doc["clusters"])
        )
    family, params = None, ()
    if "generator" in doc:
        gen = dict(doc["generator"])
        family = gen.pop("family")
        params = tuple(sorted(gen.items()))
    try:
        return Instance(
            space=space,
            demands=demands,
            facility_cost=float(doc["facility_cost"]),
            known_opt=known,
            clusters=clusters,
            family=family,
            params=params,
        )
    except ValueError as exc:
        raise InstanceLoadError("$", str(exc)) from None
