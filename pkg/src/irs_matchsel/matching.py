"""Attack-oriented and countermeasure-oriented stable matching solvers.

Attacks play the residents, countermeasures the hospitals.  Each
countermeasure's quota is the number of attacks it can address, so a
countermeasure is never over-subscribed.  Both solvers stop as soon as the
matched attacks cover the required number of (node, attack) instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .feasibility import FeasibleSet, coverage_threshold, enumerate_feasible
from .model import DerivedIndex, Scenario, build_index
from .utility import (
    Aggregates,
    BudgetSemantics,
    PreferenceProfile,
    aggregate,
    build_preferences,
    money_of,
)

# strict budget "money < xi" is checked as money <= xi - BUDGET_SLACK
BUDGET_SLACK = 1e-9


class Variant(str, Enum):
    ASM = "asm"
    CSM = "csm"

    @classmethod
    def parse(cls, value: str | Variant) -> Variant:
        return value if isinstance(value, cls) else cls(str(value).lower())


class InfeasibleMatchingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Matching:
    pairs: Mapping[int, int]  # attack -> countermeasure
    variant: Variant
    start_point: int
    restricted_to: FeasibleSet | None
    coverage: int
    steps: int  # proposal events spent

    def key(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self.pairs.items()))

    def by_countermeasure(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for a in sorted(self.pairs):
            out.setdefault(self.pairs[a], []).append(a)
        return out


def within_budget(money: float, budget: float) -> bool:
    return money <= budget - BUDGET_SLACK


def _restricted(prefs: Sequence[int], members: frozenset[int]) -> list[int]:
    return [c for c in prefs if c in members]


def asm(
    feasible_set: FeasibleSet,
    prefs: PreferenceProfile,
    index: DerivedIndex,
    threshold: int,
    start: int = 0,
) -> Matching:
    """Attack-oriented matching.

    Attacks are visited in rotation order from ``start``; each takes the first
    countermeasure of its list restricted to the feasible set.  Quotas never
    bind, so no rejection step is needed.
    """
    attacks = index.attack_ids
    if not 0 <= start < max(1, len(attacks)):
        raise ValueError(f"start {start} outside [0, {len(attacks)})")
    members = feasible_set.member_set
    order = attacks[start:] + attacks[:start]
    pairs: dict[int, int] = {}
    coverage = 0
    steps = 0
    for a in order:
        if coverage >= threshold:
            break
        top = next((c for c in prefs.attack_prefs[a] if c in members), None)
        if top is None:
            continue
        steps += 1
        pairs[a] = top
        coverage += index.n_a[a]
    if coverage < threshold:
        raise InfeasibleMatchingError(
            f"set {feasible_set} reaches coverage {coverage} < threshold {threshold}"
        )
    return Matching(pairs, Variant.ASM, start, feasible_set, coverage, steps)


def csm(
    feasible_set: FeasibleSet,
    prefs: PreferenceProfile,
    index: DerivedIndex,
    threshold: int,
    start: int = 0,
) -> Matching:
    """Countermeasure-oriented matching, proposing in vertical rounds.

    In each round every countermeasure (rotation order from ``start``) proposes
    to the next attack on its list.  An attack accepts a proposer it strictly
    prefers to its current partner; once matched to ``c`` it drops every
    countermeasure ranked after ``c``.  Below full coverage the run stops as soon
    as the threshold is met; at full coverage proposals run until exhausted,
    which is what makes the outcome stable.
    """
    members = feasible_set.members
    if not 0 <= start < len(members):
        raise ValueError(f"start {start} outside [0, {len(members)})")
    order = members[start:] + members[:start]
    full = threshold >= index.total_instances
    rank = prefs.attack_rank
    lists = {c: prefs.counter_prefs[c] for c in order}
    pointer = dict.fromkeys(order, 0)
    # limit[a]: rank of a's current partner; proposers ranked after it are deleted
    limit: dict[int, int] = {}
    pairs: dict[int, int] = {}
    coverage = 0
    steps = 0
    active = list(order)
    done = False
    while active and not done:
        still_active = []
        for c in active:
            lst = lists[c]
            p = pointer[c]
            while p < len(lst):
                lim = limit.get(lst[p])
                if lim is None or rank[lst[p]][c] < lim:
                    break
                p += 1  # deleted from c's list by an earlier match
            if p == len(lst):
                pointer[c] = p
                continue
            a = lst[p]
            pointer[c] = p + 1
            if p + 1 < len(lst):
                still_active.append(c)
            steps += 1
            current = pairs.get(a)
            if current is not None and rank[a][c] >= rank[a][current]:
                continue
            if current is None:
                coverage += index.n_a[a]
            pairs[a] = c
            limit[a] = rank[a][c]
            if not full and coverage >= threshold:
                done = True
                break
        active = still_active
    if coverage < threshold:
        raise InfeasibleMatchingError(
            f"set {feasible_set} reaches coverage {coverage} < threshold {threshold}"
        )
    return Matching(pairs, Variant.CSM, start, feasible_set, coverage, steps)


SOLVERS = {Variant.ASM: asm, Variant.CSM: csm}


def start_points(variant: Variant, feasible_set: FeasibleSet, index: DerivedIndex) -> range:
    if variant is Variant.ASM:
        return range(len(index.attack_ids))
    return range(len(feasible_set.members))


@dataclass(frozen=True)
class BlockingPair:
    attack: int
    countermeasure: int
    conditions: tuple[int, ...]  # which of the capacity (3) / preference (4) conditions fired


def blocking_pairs(
    matching: Matching | Mapping[int, int],
    prefs: PreferenceProfile,
    quotas: Mapping[int, int] | None = None,
    members: Iterable[int] | None = None,
) -> list[BlockingPair]:
    """Every coverage edge outside the matching that blocks it.

    Only countermeasures in ``members`` take part in the game; it defaults to the
    feasible set the matching was computed on, or to all countermeasures.
    """
    if isinstance(matching, Matching):
        pairs = matching.pairs
        if members is None and matching.restricted_to is not None:
            members = matching.restricted_to.members
    else:
        pairs = matching
    game = set(prefs.counter_prefs) if members is None else set(members)
    held: dict[int, list[int]] = {c: [] for c in game}
    for a, c in pairs.items():
        held.setdefault(c, []).append(a)
    out: list[BlockingPair] = []
    for c in sorted(game):
        quota = quotas[c] if quotas is not None else prefs.quota(c)
        for a in prefs.counter_prefs[c]:
            if pairs.get(a) == c:
                continue
            if not prefs.attack_prefers(a, c, pairs.get(a)):
                continue
            fired = []
            if len(held[c]) < quota and prefs.gain[a, c] > 0:
                fired.append(3)
            if any(prefs.counter_prefers(c, a, other) for other in held[c]):
                fired.append(4)
            if fired:
                out.append(BlockingPair(a, c, tuple(fired)))
    return sorted(out, key=lambda b: (b.attack, b.countermeasure))


def matching_violations(
    matching: Matching,
    prefs: PreferenceProfile,
    index: DerivedIndex,
    require_all: bool = False,
) -> list[str]:
    """Definition-style validity problems of ``matching`` (empty list = valid).

    Each attack holds at most one countermeasure by construction; with
    ``require_all`` every attack must be matched.
    """
    problems = []
    members = matching.restricted_to.member_set if matching.restricted_to else None
    for a, c in matching.pairs.items():
        if (a, c) not in prefs.cost:
            problems.append(f"pair ({a}, {c}) is not mutually acceptable")
        if members is not None and c not in members:
            problems.append(f"pair ({a}, {c}) uses a countermeasure outside {matching.restricted_to}")
    for c, held in matching.by_countermeasure().items():
        if not 1 <= len(held) <= prefs.quota(c):
            problems.append(f"countermeasure {c} holds {len(held)} attacks, quota {prefs.quota(c)}")
    if require_all:
        missing = sorted(set(index.attack_ids) - set(matching.pairs))
        if missing:
            problems.append(f"attacks {missing} unmatched at full coverage")
    covered = sum(index.n_a[a] for a in matching.pairs)
    if covered != matching.coverage:
        problems.append(f"recorded coverage {matching.coverage} != {covered}")
    return problems


@dataclass(frozen=True)
class Solution:
    """Outcome of a solver run; ``feasible`` is False when nothing fits the constraints."""

    feasible: bool
    pairs: Mapping[int, int]
    aggregates: Aggregates | None
    method: str
    matching: Matching | None = None
    candidates: int = 0
    gap: float = 0.0
    exhausted: bool = False
    stats: Mapping[str, float] = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.aggregates.objective if self.aggregates else float("-inf")


def infeasible(method: str, **kwargs) -> Solution:
    return Solution(False, {}, None, method, **kwargs)


@dataclass
class Context:
    """Scenario together with its derived index, preferences and threshold."""

    scenario: Scenario
    index: DerivedIndex
    prefs: PreferenceProfile
    threshold: int

    @classmethod
    def of(cls, scenario: Scenario, clamp: bool = True) -> Context:
        index = build_index(scenario)
        prefs = build_preferences(scenario, index, clamp)
        return cls(scenario, index, prefs, coverage_threshold(scenario.coverage_fraction, index))


def candidate_matchings(
    ctx: Context,
    variant: Variant | str,
    all_starts: bool = False,
    start: int = 0,
    feasible_sets: list[FeasibleSet] | None = None,
) -> list[Matching]:
    """Run the chosen solver on every feasible set (and every rotation if asked)."""
    variant = Variant.parse(variant)
    solver = SOLVERS[variant]
    if feasible_sets is None:
        feasible_sets = enumerate_feasible(ctx.scenario, ctx.index, ctx.threshold)
    out = []
    for fs in feasible_sets:
        starts = start_points(variant, fs, ctx.index) if all_starts else (start,)
        for s in starts:
            out.append(solver(fs, ctx.prefs, ctx.index, ctx.threshold, s))
    return out


def select_best(
    ctx: Context,
    candidates: Iterable[Matching],
    budget: float | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
    method: str = "sm",
) -> Solution:
    """Pick the in-budget candidate with the largest sum of gain/cost ratios.

    Ties go to lower spend, then to the lexicographically smaller pair list.
    """
    semantics = BudgetSemantics.parse(semantics)
    if budget is None:
        budget = ctx.scenario.budget_xi
    ratio = ctx.prefs.ratio
    best = None
    best_key = None
    count = 0
    for m in candidates:
        count += 1
        money = money_of(m.pairs, ctx.scenario, semantics)
        if not within_budget(money, budget):
            continue
        objective = 0.0
        for a in sorted(m.pairs):
            objective += ratio[a, m.pairs[a]]
        key = (-objective, money, m.key())
        if best_key is None or key < best_key:
            best, best_key = m, key
    if best is None:
        return infeasible(method, candidates=count)
    agg = aggregate(best.pairs, ctx.scenario, ctx.index, ctx.prefs, semantics)
    return Solution(True, dict(best.pairs), agg, method, matching=best, candidates=count)


def solve(
    scenario: Scenario | Context,
    variant: Variant | str = Variant.ASM,
    all_starts: bool = False,
    start: int = 0,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
    budget: float | None = None,
) -> Solution:
    """Feasible-set enumeration, one SM run per set, then budget-filtered argmax."""
    ctx = scenario if isinstance(scenario, Context) else Context.of(scenario)
    variant = Variant.parse(variant)
    candidates = candidate_matchings(ctx, variant, all_starts=all_starts, start=start)
    return select_best(ctx, candidates, budget, semantics, method=variant.value)
