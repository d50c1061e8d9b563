"""Multi-start matchings under partial coverage and Pareto filtering.

Points trade QoS cost (lower is better) against security utility (higher is
better).  Costs are never negated here.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from itertools import accumulate
from typing import Iterable, Sequence

from .feasibility import FeasibleSet
from .matching import SOLVERS, Context, Matching, Variant, start_points, within_budget
from .utility import BudgetSemantics, aggregate

DOMINANCE_TOL = 1e-12


@dataclass(frozen=True)
class SolutionPoint:
    matching: Matching
    qos_cost: float
    security_utility: float
    money_spent: float
    start_point: int
    variant: Variant
    feasible_set: FeasibleSet


def multi_start(
    ctx: Context,
    variant: Variant | str,
    feasible_sets: FeasibleSet | Sequence[FeasibleSet],
    budget: float | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
) -> list[SolutionPoint]:
    """One solver run per rotation start on each set, deduplicated per set.

    The first start producing a matching represents it; over-budget matchings
    are dropped.
    """
    variant = Variant.parse(variant)
    semantics = BudgetSemantics.parse(semantics)
    if isinstance(feasible_sets, FeasibleSet):
        feasible_sets = [feasible_sets]
    if budget is None:
        budget = ctx.scenario.budget_xi
    solver = SOLVERS[variant]
    points = []
    for fs in feasible_sets:
        seen = set()
        for s in start_points(variant, fs, ctx.index):
            m = solver(fs, ctx.prefs, ctx.index, ctx.threshold, s)
            key = m.key()
            if key in seen:
                continue
            seen.add(key)
            agg = aggregate(m.pairs, ctx.scenario, ctx.index, ctx.prefs, semantics)
            if not within_budget(agg.total_money, budget):
                continue
            points.append(SolutionPoint(m, agg.qos_cost, agg.security_utility, agg.total_money, s, variant, fs))
    return points


def dominates(p1: SolutionPoint, p2: SolutionPoint, tol: float = DOMINANCE_TOL) -> bool:
    """p1 is no worse in both objectives and better by more than ``tol`` in one."""
    if p1.qos_cost > p2.qos_cost or p1.security_utility < p2.security_utility:
        return False
    return p1.qos_cost < p2.qos_cost - tol or p1.security_utility > p2.security_utility + tol


def _front_order(p: SolutionPoint) -> tuple[float, float]:
    return (-p.security_utility, p.qos_cost)


def pareto_front(points: Iterable[SolutionPoint], tol: float = DOMINANCE_TOL) -> list[SolutionPoint]:
    """Non-dominated points, by descending security then ascending cost.

    Sweep over points sorted by cost: a point is dominated iff some point with
    cost below ``cost - tol`` has security at least as high, or some point with
    cost no higher has security above ``security + tol``.  Both are prefix
    maxima, so the scan is O(n log n).
    """
    points = list(points)
    if not points:
        return []
    by_cost = sorted(points, key=lambda p: p.qos_cost)
    costs = [p.qos_cost for p in by_cost]
    best = list(accumulate((p.security_utility for p in by_cost), max))

    def prefix_max(k: int) -> float:
        return best[k - 1] if k else float("-inf")

    front = []
    for p in points:
        cheaper = prefix_max(bisect_left(costs, p.qos_cost - tol))
        no_dearer = prefix_max(bisect_right(costs, p.qos_cost))
        if cheaper >= p.security_utility or no_dearer > p.security_utility + tol:
            continue
        front.append(p)
    return sorted(front, key=_front_order)

