"""Feasible countermeasure-set formation.

A set of countermeasures is feasible when the distinct (node, attack)
instances it can address reach the coverage threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .model import DerivedIndex, Scenario

DEFAULT_ENUMERATION_CAP = 20


class EnumerationCapError(RuntimeError):
    def __init__(self, n_countermeasures: int, cap: int):
        self.n_countermeasures = n_countermeasures
        self.cap = cap
        super().__init__(
            f"{n_countermeasures} countermeasures means 2^{n_countermeasures} = "
            f"{2 ** n_countermeasures} subsets; enumeration cap is 2^{cap}"
        )


@dataclass(frozen=True, order=True)
class FeasibleSet:
    members: tuple[int, ...]
    achievable_coverage: int

    @property
    def member_set(self) -> frozenset[int]:
        return frozenset(self.members)

    def __str__(self) -> str:
        return "{" + ",".join(str(c) for c in self.members) + "}"


def coverage_threshold(coverage_fraction: float, index: DerivedIndex) -> int:
    """Smallest instance count not below ``coverage_fraction`` of all instances."""
    if not (0.0 < coverage_fraction <= 1.0):
        raise ValueError(f"coverage fraction out of (0,1]: {coverage_fraction}")
    # round away float noise such as 0.7 * 10 = 7.000000000000001
    raw = coverage_fraction * index.total_instances
    return min(index.total_instances, math.ceil(round(raw, 9)))


def achievable_coverage(subset: Iterable[int], index: DerivedIndex) -> int:
    """Distinct (node, attack) instances addressable by the union of ``subset``."""
    mask = 0
    for c in subset:
        mask |= index.mask_of_c[c]
    return index.instances_of_mask(mask)


def enumerate_feasible(
    scenario: Scenario,
    index: DerivedIndex,
    threshold: int | None = None,
    minimal_only: bool = False,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[FeasibleSet]:
    """Every non-empty countermeasure subset meeting the coverage threshold.

    Ordered by size, then lexicographically by member ids.  With
    ``minimal_only`` supersets of feasible sets are dropped.
    """
    ids = index.countermeasure_ids
    if len(ids) > cap:
        raise EnumerationCapError(len(ids), cap)
    if threshold is None:
        threshold = coverage_threshold(scenario.coverage_fraction, index)
    masks = index.mask_of_c
    instances: dict[int, int] = {}
    found: list[FeasibleSet] = []
    for size in range(1, len(ids) + 1):
        for combo in combinations(ids, size):
            if minimal_only and any(set(f.members) <= set(combo) for f in found):
                continue
            mask = 0
            for c in combo:
                mask |= masks[c]
            cov = instances.get(mask)
            if cov is None:
                cov = instances[mask] = index.instances_of_mask(mask)
            if cov >= threshold:
                found.append(FeasibleSet(combo, cov))
    return found
