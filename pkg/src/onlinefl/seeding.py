"""Per-trial random streams derived from one experiment seed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def trial_seed(seed: int, i: int) -> int:
    """64-bit seed of trial ``i``; independent of how trials are scheduled."""
    ss = np.random.SeedSequence(entropy=[int(seed) & 0xFFFFFFFFFFFFFFFF, int(i)])
    return int(ss.generate_state(1, np.uint64)[0])


def trial_seeds(seed: int, trials: int) -> list:
    return [trial_seed(seed, i) for i in range(trials)]


@dataclass
class TrialStreams:
    """Independent generators for arrival order, algorithm coins and analysis coins."""

    order: np.random.Generator
    coins: np.random.Generator
    analysis: np.random.Generator


def trial_streams(tseed: int) -> TrialStreams:
    children = np.random.SeedSequence(int(tseed)).spawn(3)
    return TrialStreams(*(np.random.default_rng(c) for c in children))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))
