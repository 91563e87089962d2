"""Random and scaffold train/validation/test partitions."""

from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mmsg.errors import ConfigError, DatasetTooSmall

SUBSETS = ("train", "val", "test")


class DegenerateSplit(UserWarning):
    """A validation or test subset came out empty."""


@dataclass
class SplitAssignment:
    train: list[int]
    val: list[int]
    test: list[int]
    kind: str
    seed: int

    def subsets(self) -> dict[str, list[int]]:
        return {"train": self.train, "val": self.val, "test": self.test}

    def to_json(self) -> str:
        return json.dumps(self.subsets(), separators=(",", ":")) + "\n"

    def labels(self, n: int) -> np.ndarray:
        """Subset id (0 train, 1 val, 2 test) per index."""
        out = np.full(n, -1, dtype=np.int64)
        for k, name in enumerate(SUBSETS):
            out[getattr(self, name)] = k
        return out


def _check(n: int, ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ConfigError(f"ratios must be three non-negative numbers summing to 1, got {list(ratios)}")
    if n < 10:
        raise DatasetTooSmall(f"need at least 10 molecules to split, got {n}")
    return tuple(float(r) for r in ratios)


def random_split(n: int, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    """Seeded shuffle; val/test sizes are floored and train takes the remainder."""
    _, r_val, r_test = _check(n, ratios)
    perm = np.random.default_rng(seed).permutation(n).tolist()
    n_val = math.floor(r_val * n + 1e-9)
    n_test = math.floor(r_test * n + 1e-9)
    n_train = n - n_val - n_test
    return SplitAssignment(
        train=perm[:n_train],
        val=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val :],
        kind="random",
        seed=seed,
    )


def scaffold_split(keys: Sequence[str], ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    """Group by scaffold key; biggest groups first, each to the subset most below target.

    Ties between equal-size groups break on the key, ties between equally
    deficient subsets prefer train, then val, then test. The assignment does
    not depend on ``seed``; it is recorded for provenance only.
    """
    n = len(keys)
    r = _check(n, ratios)
    groups: dict[str, list[int]] = defaultdict(list)
    for i, k in enumerate(keys):
        groups[k].append(i)
    order = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    targets = [ri * n for ri in r]
    parts: list[list[int]] = [[], [], []]
    for _, members in order:
        deficits = [targets[j] - len(parts[j]) for j in range(3)]
        j = max(range(3), key=lambda j: (deficits[j], -j))
        parts[j].extend(members)
    for p in parts:
        p.sort()
    if not parts[1] or not parts[2]:
        warnings.warn(f"scaffold split of {n} molecules left val or test empty", DegenerateSplit, stacklevel=2)
    return SplitAssignment(parts[0], parts[1], parts[2], kind="scaffold", seed=seed)
