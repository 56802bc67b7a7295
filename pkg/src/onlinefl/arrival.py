"""Arrival-order models."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .instances import IIDDistribution, Instance


class ArrivalError(ValueError):
    pass


@dataclass(frozen=True)
class Adversarial:
    order: Optional[tuple] = None  # None means the instance's canonical order

    name = "adversarial"


@dataclass(frozen=True)
class UniformRandom:
    name = "uniform"


@dataclass(frozen=True)
class IID:
    distribution: IIDDistribution
    n: int

    name = "iid"

    def __post_init__(self):
        if self.n < 1:
            raise ArrivalError("IID needs n >= 1")


@dataclass(frozen=True)
class PartialRandom:
    """Per cluster, a fixed subset arrives in adversarial relative order and the rest at random slots.

    ``adversarial_subsets`` maps each cluster (by position in the cluster
    list) to its adversarial demand indices. When omitted, each cluster uses
    its ``floor((1 - rho) n_j)`` demands farthest from the center, ties to the
    lower index. ``adversarial_order`` ranks the adversarial demands; by
    default they arrive farthest first.
    """

    rho: float
    adversarial_subsets: Optional[tuple] = None
    adversarial_order: Optional[tuple] = None
    interleaver: str = "cluster-blocks"

    name = "partial"

    def __post_init__(self):
        _check_rho(self.rho)


@dataclass(frozen=True)
class PartialRandomRandomAdv:
    """As :class:`PartialRandom` with each adversarial subset drawn uniformly at random."""

    rho: float
    interleaver: str = "cluster-blocks"

    name = "partial_random_adv"

    def __post_init__(self):
        _check_rho(self.rho)


def _check_rho(rho):
    if not 0 < rho < 1:
        raise ArrivalError(f"rho must lie in (0, 1), got {rho}")


def adversarial_count(rho: float, n_j: int) -> int:
    """``floor((1 - rho) * n_j)`` computed on the rational value of ``rho``."""
    frac = Fraction(rho).limit_denominator(10**9)
    return int((1 - frac) * n_j // 1)


# ------------------------------------------------------------------ interleavers


def _cluster_blocks(seqs: list, rng) -> list:
    return [i for s in seqs for i in s]


def _round_robin(seqs: list, rng) -> list:
    out = []
    pos = [0] * len(seqs)
    remaining = sum(len(s) for s in seqs)
    while remaining:
        for c, s in enumerate(seqs):
            if pos[c] < len(s):
                out.append(s[pos[c]])
                pos[c] += 1
                remaining -= 1
    return out


_INTERLEAVERS: dict = {"cluster-blocks": _cluster_blocks, "round-robin": _round_robin}


def builtin_interleavers() -> list:
    return ["cluster-blocks", "round-robin"]


def register_interleaver(name: str, fn: Callable) -> None:
    """Add a strategy ``fn(cluster_sequences, rng) -> merged sequence``.

    The result must contain every demand once and keep each cluster's
    relative order; this is checked on every call.
    """
    _INTERLEAVERS[name] = fn


def get_interleaver(name: str) -> Callable:
    try:
        return _INTERLEAVERS[name]
    except KeyError:
        raise ArrivalError(f"unknown interleaver {name!r}; known: {sorted(_INTERLEAVERS)}") from None


def interleave(name: str, seqs: list, rng=None) -> list:
    merged = list(get_interleaver(name)(seqs, rng))
    pos = {d: t for t, d in enumerate(merged)}
    if len(merged) != sum(len(s) for s in seqs) or len(pos) != len(merged):
        raise ArrivalError(f"interleaver {name!r} did not return each demand exactly once")
    for s in seqs:
        if any(s[i] not in pos for i in range(len(s))) or any(pos[s[i]] > pos[s[i + 1]] for i in range(len(s) - 1)):
            raise ArrivalError(f"interleaver {name!r} broke a cluster's relative order")
    return merged


# ------------------------------------------------------------------ partial orders


def cluster_distances(instance: Instance, clusters) -> np.ndarray:
    """``d*`` per demand: distance to its cluster center."""
    dstar = np.zeros(instance.n_demands)
    for c in clusters:
        for i in c.demand_indices:
            dstar[i] = instance.space.distance(c.center, instance.demands[i])
    return dstar


def default_adversarial_subsets(instance: Instance, clusters, rho: float) -> tuple:
    dstar = cluster_distances(instance, clusters)
    out = []
    for c in clusters:
        a = adversarial_count(rho, len(c.demand_indices))
        ranked = sorted(c.demand_indices, key=lambda i: (-dstar[i], i))
        out.append(tuple(ranked[:a]))
    return tuple(out)


def cluster_sequence(adv: Sequence[int], rand: Sequence[int], rng: np.random.Generator) -> list:
    """Place each random demand in a uniform slot among the adversarial ones.

    Slot ``s`` means "after the first ``s`` adversarial demands"; demands
    sharing a slot appear in random relative order.
    """
    rand = list(rand)
    shuffled = [rand[i] for i in rng.permutation(len(rand))]
    slots = rng.integers(0, len(adv) + 1, size=len(shuffled))
    by_slot = [[] for _ in range(len(adv) + 1)]
    for d, s in zip(shuffled, slots):
        by_slot[s].append(d)
    seq = list(by_slot[0])
    for j, a in enumerate(adv):
        seq.append(a)
        seq.extend(by_slot[j + 1])
    return seq


def _partial_order(clusters, subsets, rank, interleaver, rng) -> np.ndarray:
    seqs = []
    for c, adv in zip(clusters, subsets):
        adv_set = set(adv)
        if not adv_set <= set(c.demand_indices):
            raise ArrivalError("an adversarial subset is not contained in its cluster")
        adv = sorted(adv, key=rank)
        rand = [i for i in c.demand_indices if i not in adv_set]
        seqs.append(cluster_sequence(adv, rand, rng))
    return np.asarray(interleave(interleaver, seqs, rng), dtype=np.int_)


def resolve_clusters(instance: Instance):
    if instance.clusters is not None:
        return instance.clusters
    from .offline import BudgetExceeded, clusters_of, solve_exact

    try:
        return clusters_of(solve_exact(instance))
    except BudgetExceeded as exc:
        raise ArrivalError(f"partial models need clusters; instance has none and {exc}") from None


def order_sampler(instance: Instance, model, clusters=None) -> Callable:
    """Validate ``model`` against ``instance`` once and return ``rng -> order``.

    For :class:`IID` the sampler returns a tuple of sampled descriptors.
    """
    n = instance.n_demands
    if isinstance(model, Adversarial):
        if model.order is None:
            fixed = np.arange(n)
        else:
            fixed = np.asarray(model.order, dtype=np.int_)
            if fixed.size and (fixed.min() < 0 or fixed.max() >= n):
                raise ArrivalError("adversarial order references a missing demand")
        return lambda rng: fixed.copy()
    if isinstance(model, UniformRandom):
        return lambda rng: rng.permutation(n)
    if isinstance(model, IID):
        return lambda rng: model.distribution.sample(rng, model.n)
    if not isinstance(model, (PartialRandom, PartialRandomRandomAdv)):
        raise ArrivalError(f"unknown arrival model {model!r}")

    get_interleaver(model.interleaver)
    clusters = clusters if clusters is not None else resolve_clusters(instance)
    counts = [adversarial_count(model.rho, len(c.demand_indices)) for c in clusters]
    if isinstance(model, PartialRandomRandomAdv):
        def sample(rng):
            subsets = []
            for c, a in zip(clusters, counts):
                pick = rng.choice(len(c.demand_indices), size=a, replace=False)
                subsets.append(tuple(c.demand_indices[j] for j in pick))
            return _partial_order(clusters, subsets, lambda i: i, model.interleaver, rng)

        return sample

    dstar = cluster_distances(instance, clusters)
    subsets = model.adversarial_subsets
    if subsets is None:
        subsets = default_adversarial_subsets(instance, clusters, model.rho)
    if len(subsets) != len(clusters):
        raise ArrivalError("need one adversarial subset per cluster")
    for adv, a in zip(subsets, counts):
        if len(set(adv)) != a:
            raise ArrivalError("adversarial subset size must be floor((1 - rho) n_j)")
    if model.adversarial_order is not None:
        pos = {d: t for t, d in enumerate(model.adversarial_order)}
        missing = [i for adv in subsets for i in adv if i not in pos]
        if missing:
            raise ArrivalError(f"adversarial_order does not rank demand {missing[0]}")
        rank = pos.__getitem__
    else:
        rank = lambda i: (-dstar[i], i)  # noqa: E731
    return lambda rng: _partial_order(clusters, subsets, rank, model.interleaver, rng)


def make_order(instance: Instance, model, rng: np.random.Generator, clusters=None):
    """Arrival sequence of demand indices; for :class:`IID` a tuple of sampled descriptors."""
    return order_sampler(instance, model, clusters)(rng)


def model_from_json(doc: dict, distribution: Optional[IIDDistribution] = None):
    """Build a model from ``{"model": ..., "order"?, "rho"?, "interleaver"?, "n"?}``."""
    kind = doc.get("model")
    if kind == "adversarial":
        order = doc.get("order")
        return Adversarial(tuple(order) if order is not None else None)
    if kind == "uniform":
        return UniformRandom()
    if kind == "iid":
        if distribution is None:
            raise ArrivalError("iid model needs a distribution")
        return IID(distribution, int(doc["n"]))
    if kind == "partial":
        return PartialRandom(float(doc["rho"]), interleaver=doc.get("interleaver", "cluster-blocks"))
    if kind == "partial_random_adv":
        return PartialRandomRandomAdv(float(doc["rho"]), interleaver=doc.get("interleaver", "cluster-blocks"))
    raise ArrivalError(f"unknown arrival model {kind!r}")


def model_to_json(model) -> dict:
    doc = {"model": model.name}
    if isinstance(model, Adversarial) and model.order is not None:
        doc["order"] = list(model.order)
    if isinstance(model, IID):
        doc["n"] = model.n
    if isinstance(model, (PartialRandom, PartialRandomRandomAdv)):
        doc["rho"] = model.rho
        doc["interleaver"] = model.interleaver
    return doc
