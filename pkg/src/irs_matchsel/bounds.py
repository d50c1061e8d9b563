"""Exact and bounding oracles for the matching problem.

The problem: choose at most one countermeasure per attack to maximize the sum
of gain/cost ratios, subject to the money budget and the coverage threshold.

Relaxing the coverage constraint (multiplier ``rho >= 0``) and the
one-countermeasure-per-attack constraint (multipliers ``theta``) decouples the
problem into one 0/1 knapsack per countermeasure.  Each knapsack is solved as
a *maximization*: only then does the sum of their optima, minus the constant
terms, bound the original maximum from above.  Every knapsack keeps the full
budget, a further relaxation that preserves validity.

Below full coverage an attack may stay unmatched, so the per-attack constraint
is an inequality and its multipliers must be ``<= 0`` for the bound to hold.
At full coverage every feasible assignment matches all attacks and ``theta``
is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .matching import BUDGET_SLACK, Context, Solution, infeasible, within_budget
from .utility import BudgetSemantics, aggregate, money_of

BRUTE_FORCE_LIMIT = 10**7
NODE_LIMIT = 10**6
_CHUNK = 1 << 20


class InstanceTooLargeError(RuntimeError):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"exhaustive search needs {count} assignments, limit is {limit}")


@dataclass(frozen=True)
class DualVariables:
    rho: float
    theta: tuple[float, ...]  # indexed by attack id

    @classmethod
    def zeros(cls, n_attacks: int) -> DualVariables:
        return cls(0.0, (0.0,) * n_attacks)


@dataclass(frozen=True)
class BoundResult:
    upper_bound: float
    duals: DualVariables
    mu: Mapping[int, float]
    iterations: int
    relaxed_solution: Mapping[int, tuple[int, ...]]  # countermeasure -> chosen attacks
    history: tuple[float, ...] = field(default=(), compare=False)


def full_coverage(ctx: Context) -> bool:
    return ctx.threshold >= ctx.index.total_instances


def check_duals(ctx: Context, duals: DualVariables) -> None:
    if len(duals.theta) != len(ctx.index.attack_ids):
        raise ValueError(f"theta has {len(duals.theta)} entries, expected {len(ctx.index.attack_ids)}")
    if duals.rho < 0:
        raise ValueError(f"rho must be >= 0, got {duals.rho}")
    if not full_coverage(ctx) and any(t > 0 for t in duals.theta):
        raise ValueError("below full coverage the per-attack multipliers must be <= 0")


def knapsack_subproblem(
    countermeasure: int,
    duals: DualVariables,
    ctx: Context,
    budget: float | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
    attacks: Iterable[int] | None = None,
    already_paid: bool = False,
) -> tuple[float, tuple[int, ...]]:
    """Best value of one countermeasure's relaxed knapsack and the attacks it takes.

    Every item weighs the countermeasure's money, so under per-pair charging the
    optimum takes the ``floor(budget / money)`` largest positive coefficients.
    ``attacks`` restricts the items (used by branch and bound); ``already_paid``
    marks a countermeasure whose one-off charge is already spent.
    """
    semantics = BudgetSemantics.parse(semantics)
    if budget is None:
        budget = ctx.scenario.budget_xi
    items = ctx.index.w_of_c[countermeasure] if attacks is None else set(attacks) & ctx.index.w_of_c[countermeasure]
    coefs = []
    for a in items:
        value = ctx.prefs.ratio[a, countermeasure] + duals.rho * ctx.index.n_a[a] + duals.theta[a]
        if value > 0:
            coefs.append((-value, a))
    coefs.sort()
    price = ctx.scenario.countermeasures[countermeasure].money
    if semantics is BudgetSemantics.PER_PAIR:
        if price <= 0 or math.isinf(budget):
            k = len(coefs)
        else:
            # the 1e-9 keeps the capacity from rounding down; erring high keeps the bound valid
            k = max(0, math.floor(budget / price + 1e-9))
    else:
        k = len(coefs) if already_paid or price <= budget + 1e-9 else 0
    chosen = coefs[:k]
    return sum(-v for v, _ in chosen), tuple(sorted(a for _, a in chosen))


def lagrangian_bound(
    ctx: Context,
    duals: DualVariables,
    budget: float | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
) -> BoundResult:
    """Upper bound on the best feasible objective for the given multipliers."""
    check_duals(ctx, duals)
    mu: dict[int, float] = {}
    chosen: dict[int, tuple[int, ...]] = {}
    for c in ctx.index.countermeasure_ids:
        mu[c], chosen[c] = knapsack_subproblem(c, duals, ctx, budget, semantics)
    bound = sum(mu.values()) - duals.rho * ctx.threshold - sum(duals.theta)
    return BoundResult(bound, duals, mu, 0, chosen)


def _subgradient(ctx: Context, result: BoundResult) -> tuple[float, list[float]]:
    covered = sum(ctx.index.n_a[a] for attacks in result.relaxed_solution.values() for a in attacks)
    counts = [0] * len(ctx.index.attack_ids)
    for attacks in result.relaxed_solution.values():
        for a in attacks:
            counts[a] += 1
    return covered - ctx.threshold, [n - 1.0 for n in counts]


def optimize_duals(
    ctx: Context,
    max_iter: int = 200,
    t0: float = 1.0,
    step_rule: str = "normalized",
    budget: float | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
) -> BoundResult:
    """Projected subgradient descent on the dual; returns the lowest bound seen.

    Step ``k`` has length ``t0 / sqrt(k)``.  With ``step_rule="normalized"`` it is
    taken along the unit subgradient, with ``"sqrt"`` along the raw one.
    """
    if step_rule not in ("normalized", "sqrt"):
        raise ValueError(f"unknown step rule {step_rule!r}")
    free_theta = full_coverage(ctx)
    duals = DualVariables.zeros(len(ctx.index.attack_ids))
    current = lagrangian_bound(ctx, duals, budget, semantics)
    best = current
    history = [current.upper_bound]
    for k in range(1, max_iter + 1):
        g_rho, g_theta = _subgradient(ctx, current)
        norm = math.sqrt(g_rho * g_rho + sum(g * g for g in g_theta))
        if norm == 0.0:
            break  # relaxed solution satisfies the relaxed constraints with equality
        step = t0 / math.sqrt(k)
        if step_rule == "normalized":
            step /= norm
        rho = max(0.0, duals.rho - step * g_rho)
        theta = [t - step * g for t, g in zip(duals.theta, g_theta)]
        if not free_theta:
            theta = [min(0.0, t) for t in theta]
        duals = DualVariables(rho, tuple(theta))
        current = lagrangian_bound(ctx, duals, budget, semantics)
        history.append(current.upper_bound)
        if current.upper_bound < best.upper_bound:
            best = current
    return BoundResult(
        best.upper_bound, best.duals, best.mu, len(history) - 1, best.relaxed_solution, tuple(history)
    )


def _options(ctx: Context) -> list[list[int]]:
    """Per attack: -1 (unmatched) followed by covering countermeasures in id order."""
    return [[-1] + sorted(ctx.index.l_of_a[a]) for a in ctx.index.attack_ids]


def brute_force(
    ctx: Context,
    budget: float | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
    limit: int = BRUTE_FORCE_LIMIT,
) -> Solution:
    """Exhaustive search over every assignment of each attack to nothing or a coverer."""
    semantics = BudgetSemantics.parse(semantics)
    if budget is None:
        budget = ctx.scenario.budget_xi
    options = _options(ctx)
    count = math.prod(len(o) for o in options)
    if count > limit:
        raise InstanceTooLargeError(count, limit)
    n_att = len(options)
    cm_ids = ctx.index.countermeasure_ids
    money = {c: ctx.scenario.countermeasures[c].money for c in cm_ids}
    ratio_tab = [np.array([0.0] + [ctx.prefs.ratio[a, c] for c in o[1:]]) for a, o in enumerate(options)]
    cov_tab = [np.array([0] + [ctx.index.n_a[a]] * (len(o) - 1)) for a, o in enumerate(options)]
    money_tab = [np.array([0.0] + [money[c] for c in o[1:]]) for o in options]
    strides = []
    s = 1
    for o in options:
        strides.append(s)
        s *= len(o)

    best_obj = -math.inf
    tied: list[int] = []
    for lo in range(0, count, _CHUNK):
        idx = np.arange(lo, min(count, lo + _CHUNK), dtype=np.int64)
        digits = [(idx // strides[i]) % len(options[i]) for i in range(n_att)]
        obj = np.zeros(len(idx))
        cov = np.zeros(len(idx), dtype=np.int64)
        for i in range(n_att):
            obj = obj + ratio_tab[i][digits[i]]
            cov += cov_tab[i][digits[i]]
        if semantics is BudgetSemantics.PER_PAIR:
            spend = np.zeros(len(idx))
            for i in range(n_att):
                spend = spend + money_tab[i][digits[i]]
        else:
            spend = np.zeros(len(idx))
            for c in cm_ids:
                used = np.zeros(len(idx), dtype=bool)
                for i, o in enumerate(options):
                    if c in o:
                        used |= digits[i] == o.index(c)
                spend = spend + used * money[c]
        ok = (cov >= ctx.threshold) & (spend <= budget - BUDGET_SLACK)
        if not ok.any():
            continue
        chunk_best = obj[ok].max()
        if chunk_best > best_obj:
            best_obj = chunk_best
            tied = []
        if chunk_best == best_obj:
            tied.extend(int(lo + j) for j in np.flatnonzero(ok & (obj == chunk_best)))
    if not tied:
        return infeasible("brute_force", candidates=count)

    def decode(code: int) -> dict[int, int]:
        pairs = {}
        for i, o in enumerate(options):
            c = o[(code // strides[i]) % len(o)]
            if c >= 0:
                pairs[i] = c
        return pairs

    decoded = [decode(code) for code in tied]
    pairs = min(decoded, key=lambda p: (money_of(p, ctx.scenario, semantics), tuple(sorted(p.items()))))
    agg = aggregate(pairs, ctx.scenario, ctx.index, ctx.prefs, semantics)
    return Solution(True, pairs, agg, "brute_force", candidates=count)


def branch_and_bound_exact(
    ctx: Context,
    budget: float | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
    duals: DualVariables | None = None,
    node_limit: int = NODE_LIMIT,
    dual_iterations: int = 50,
) -> Solution:
    """Depth-first branch and bound over per-attack assignments.

    Nodes are pruned when the Lagrangian bound of the unfixed attacks (residual
    budget and threshold) cannot lift the objective above the incumbent.  When
    ``node_limit`` is hit the incumbent comes back with ``exhausted=True`` and the
    remaining optimality gap.
    """
    semantics = BudgetSemantics.parse(semantics)
    if budget is None:
        budget = ctx.scenario.budget_xi
    if duals is None:
        duals = optimize_duals(ctx, dual_iterations, budget=budget, semantics=semantics).duals
    check_duals(ctx, duals)
    attacks = ctx.index.attack_ids
    n_a = ctx.index.n_a
    ratio = ctx.prefs.ratio
    price = {c: ctx.scenario.countermeasures[c].money for c in ctx.index.countermeasure_ids}
    choices = {
        a: sorted(ctx.index.l_of_a[a], key=lambda c, a=a: (-ratio[a, c], c)) + [None] for a in attacks
    }
    # instances still reachable from attack i onwards
    reach = [0] * (len(attacks) + 1)
    for i in range(len(attacks) - 1, -1, -1):
        a = attacks[i]
        reach[i] = reach[i + 1] + (n_a[a] if ctx.index.l_of_a[a] else 0)
    per_pair = semantics is BudgetSemantics.PER_PAIR

    def remaining_bound(i: int, spent: float, covered: int, used: frozenset[int]) -> float:
        rest = attacks[i:]
        residual = max(0, ctx.threshold - covered)
        total = -duals.rho * residual - sum(duals.theta[a] for a in rest)
        for c in ctx.index.countermeasure_ids:
            mu, _ = knapsack_subproblem(
                c, duals, ctx, budget=budget - spent, semantics=semantics,
                attacks=rest, already_paid=c in used,
            )
            total += mu
        return total

    root_bound = remaining_bound(0, 0.0, 0, frozenset())
    best_key = None
    best_pairs: dict[int, int] | None = None
    nodes = 0
    exhausted = False
    pairs: dict[int, int] = {}

    def visit(i: int, obj: float, spent: float, covered: int, used: frozenset[int]) -> None:
        nonlocal best_key, best_pairs, nodes, exhausted
        if exhausted:
            return
        nodes += 1
        if nodes > node_limit:
            exhausted = True
            return
        if not within_budget(spent, budget) or covered + reach[i] < ctx.threshold:
            return
        if i == len(attacks):
            key = (-obj, spent, tuple(sorted(pairs.items())))
            if best_key is None or key < best_key:
                best_key, best_pairs = key, dict(pairs)
            return
        if best_key is not None and obj + remaining_bound(i, spent, covered, used) <= -best_key[0] + 1e-12:
            return
        a = attacks[i]
        for c in choices[a]:
            if c is None:
                visit(i + 1, obj, spent, covered, used)
                continue
            pairs[a] = c
            if per_pair:
                cost = spent + price[c]
            else:
                cost = spent if c in used else spent + price[c]
            visit(i + 1, obj + ratio[a, c], cost, covered + n_a[a], used | {c})
            del pairs[a]

    visit(0, 0.0, 0.0, 0, frozenset())
    stats = {"nodes": float(nodes), "root_bound": root_bound}
    if best_pairs is None:
        gap = 0.0 if not exhausted else math.inf
        return infeasible("branch_and_bound", exhausted=exhausted, gap=gap, stats=stats)
    agg = aggregate(best_pairs, ctx.scenario, ctx.index, ctx.prefs, semantics)
    gap = max(0.0, root_bound - agg.objective) if exhausted else 0.0
    return Solution(True, best_pairs, agg, "branch_and_bound", gap=gap, exhausted=exhausted, stats=stats)
