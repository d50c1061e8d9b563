"""Cost/utility functions, preference lists and matching aggregates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .model import QOS_DIMENSIONS, DerivedIndex, Scenario

# Floor applied to an attack's normalized cost so that gain/cost ratios stay finite.
EPS_COST = 1e-6

Pair = tuple[int, int]  # (attack id, countermeasure id)


class BudgetSemantics(str, Enum):
    """How money (and time/energy) are charged for a matching.

    ``PER_PAIR`` charges a countermeasure once per attack it is matched to;
    ``PER_COUNTERMEASURE`` charges it once however many attacks it addresses.
    """

    PER_PAIR = "per_pair"
    PER_COUNTERMEASURE = "per_countermeasure"

    @classmethod
    def parse(cls, value: str | BudgetSemantics) -> BudgetSemantics:
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("-", "_"))


class DegenerateRangeError(ValueError):
    pass


def normalize(value: float, lo: float, hi: float, clamp: bool = True) -> float:
    if hi == lo:
        if not clamp:
            raise DegenerateRangeError(f"degenerate normalization range [{lo}, {hi}]")
        return 0.0
    x = (value - lo) / (hi - lo)
    if clamp:
        x = min(1.0, max(0.0, x))
    return x


def qos_cost_of_pair(attack: int, countermeasure: int, scenario: Scenario, clamp: bool = True) -> float:
    """Normalized, beta-weighted QoS cost an attack assigns to a countermeasure.

    Lower is better for the attack.  An exact zero is replaced by ``EPS_COST``.
    """
    c = scenario.countermeasures[countermeasure]
    if attack not in c.covers:
        raise KeyError(f"countermeasure {countermeasure} does not cover attack {attack}")
    total = 0.0
    for beta, dim in zip(scenario.betas, QOS_DIMENSIONS):
        lo, hi = scenario.qos_range[dim]
        total += beta * normalize(c.raw_cost(dim), lo, hi, clamp)
    return total if total > 0.0 else EPS_COST


def security_utility_of_pair(attack: int, countermeasure: int, scenario: Scenario, index: DerivedIndex) -> float:
    """Node-weighted risk reduction of ``attack`` by ``countermeasure`` over its initial risk.

    Analytically this reduces to delta_R / R_a since both are per-attack constants.
    """
    c = scenario.countermeasures[countermeasure]
    if attack not in c.covers:
        raise KeyError(f"countermeasure {countermeasure} does not cover attack {attack}")
    a = scenario.attacks[attack]
    weight = sum(scenario.nodes[n].alpha for n in a.affected_nodes)
    denom = weight * index.rf[attack]
    if denom == 0.0:
        raise ZeroDivisionError(f"attack {attack} has zero weighted risk")
    return weight * c.covers[attack] / denom


def weighted_risk(attack: int, scenario: Scenario, index: DerivedIndex) -> float:
    a = scenario.attacks[attack]
    return sum(scenario.nodes[n].alpha for n in a.affected_nodes) * index.rf[attack]


def joint_utility(countermeasure: int, scenario: Scenario, index: DerivedIndex) -> float:
    """Security gain of one countermeasure divided by its raw weighted QoS cost."""
    c = scenario.countermeasures[countermeasure]
    if not index.w_of_c.get(countermeasure):
        raise ValueError(f"countermeasure {countermeasure} covers no attack")
    total_risk = sum(weighted_risk(a, scenario, index) for a in index.n_a)
    gain = 0.0
    for a_id in sorted(index.w_of_c[countermeasure]):
        a = scenario.attacks[a_id]
        gain += sum(scenario.nodes[n].alpha for n in a.affected_nodes) * c.covers[a_id]
    b1, b2, b3 = scenario.betas
    denom = b1 * c.time + b2 * c.energy + b3 * c.money
    if denom == 0.0:
        raise ZeroDivisionError(f"countermeasure {countermeasure} has zero weighted raw cost")
    return (gain / total_risk) / denom


@dataclass(frozen=True)
class PreferenceProfile:
    """Strict preference lists of both sides plus cached utilities per coverage edge.

    Attacks rank countermeasures by ascending cost, countermeasures rank attacks
    by descending security gain; ties fall back to ascending id.
    """

    attack_prefs: Mapping[int, tuple[int, ...]]
    counter_prefs: Mapping[int, tuple[int, ...]]
    cost: Mapping[Pair, float]
    gain: Mapping[Pair, float]
    ratio: Mapping[Pair, float]
    attack_rank: Mapping[int, Mapping[int, int]]
    counter_rank: Mapping[int, Mapping[int, int]]

    def quota(self, countermeasure: int) -> int:
        return len(self.counter_prefs[countermeasure])

    def attack_prefers(self, attack: int, c1: int, c2: int | None) -> bool:
        """True if ``attack`` strictly prefers ``c1`` to ``c2`` (None = unmatched)."""
        if c2 is None:
            return True
        rank = self.attack_rank[attack]
        return rank[c1] < rank[c2]

    def counter_prefers(self, countermeasure: int, a1: int, a2: int) -> bool:
        rank = self.counter_rank[countermeasure]
        return rank[a1] < rank[a2]


def build_preferences(
    scenario: Scenario, index: DerivedIndex, clamp: bool = True, security_scale: float = 1.0
) -> PreferenceProfile:
    """Build both sides' preference lists.

    ``security_scale`` multiplies every countermeasure-side utility; it exists to
    exercise the weighting-neutrality property and never changes any ordering.
    """
    cost: dict[Pair, float] = {}
    gain: dict[Pair, float] = {}
    for c_id in index.countermeasure_ids:
        for a_id in sorted(index.w_of_c[c_id]):
            cost[a_id, c_id] = qos_cost_of_pair(a_id, c_id, scenario, clamp)
            gain[a_id, c_id] = security_scale * security_utility_of_pair(a_id, c_id, scenario, index)
    ratio = {edge: gain[edge] / cost[edge] for edge in cost}

    attack_prefs = {
        a: tuple(sorted(index.l_of_a[a], key=lambda c, a=a: (cost[a, c], c))) for a in index.attack_ids
    }
    counter_prefs = {
        c: tuple(sorted(index.w_of_c[c], key=lambda a, c=c: (-gain[a, c], a))) for c in index.countermeasure_ids
    }
    return PreferenceProfile(
        attack_prefs=attack_prefs,
        counter_prefs=counter_prefs,
        cost=cost,
        gain=gain,
        ratio=ratio,
        attack_rank={a: {c: i for i, c in enumerate(lst)} for a, lst in attack_prefs.items()},
        counter_rank={c: {a: i for i, a in enumerate(lst)} for c, lst in counter_prefs.items()},
    )


@dataclass(frozen=True)
class Aggregates:
    total_time: float
    total_energy: float
    total_money: float
    security_utility: float
    qos_cost: float
    objective: float
    coverage_instances: int
    matched_attacks: int
    # sum of countermeasure-side utilities over matched pairs
    security_gain: float = 0.0

    def per_attack(self, value: float) -> float:
        return value / self.matched_attacks if self.matched_attacks else 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "time": self.total_time,
            "energy": self.total_energy,
            "money": self.total_money,
            "security": self.security_utility,
            "qos_cost": self.qos_cost,
            "objective": self.objective,
            "coverage": self.coverage_instances,
            "matched": self.matched_attacks,
            "security_gain": self.security_gain,
        }


EMPTY_AGGREGATES = Aggregates(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0, 0.0)


def charged_countermeasures(pairs: Mapping[int, int], semantics: BudgetSemantics | str) -> list[int]:
    """Countermeasure ids charged under ``semantics``, one entry per charge."""
    if BudgetSemantics.parse(semantics) is BudgetSemantics.PER_PAIR:
        return [pairs[a] for a in sorted(pairs)]
    return sorted(set(pairs.values()))


def money_of(pairs: Mapping[int, int], scenario: Scenario, semantics: BudgetSemantics | str) -> float:
    return math.fsum(scenario.countermeasures[c].money for c in charged_countermeasures(pairs, semantics))


def aggregate(
    pairs: Mapping[int, int],
    scenario: Scenario,
    index: DerivedIndex,
    prefs: PreferenceProfile | None = None,
    semantics: BudgetSemantics | str = BudgetSemantics.PER_PAIR,
) -> Aggregates:
    """Aggregate QoS, security and objective values of a matching (attack -> countermeasure)."""
    semantics = BudgetSemantics.parse(semantics)
    if not pairs:
        return EMPTY_AGGREGATES
    if prefs is None:
        prefs = build_preferences(scenario, index)
    charged = [scenario.countermeasures[c] for c in charged_countermeasures(pairs, semantics)]
    total_risk = sum(weighted_risk(a, scenario, index) for a in index.attack_ids)
    security = 0.0
    qos = 0.0
    objective = 0.0
    gain = 0.0
    coverage = 0
    for a in sorted(pairs):
        c = pairs[a]
        edge = (a, c)
        if edge not in prefs.cost:
            raise ValueError(f"pair (attack {a}, countermeasure {c}) is not a coverage edge")
        weight = sum(scenario.nodes[n].alpha for n in scenario.attacks[a].affected_nodes)
        security += weight * scenario.countermeasures[c].covers[a]
        qos += prefs.cost[edge]
        objective += prefs.ratio[edge]
        gain += prefs.gain[edge]
        coverage += index.n_a[a]
    return Aggregates(
        total_time=math.fsum(c.time for c in charged),
        total_energy=math.fsum(c.energy for c in charged),
        total_money=math.fsum(c.money for c in charged),
        security_utility=security / total_risk,
        qos_cost=qos,
        objective=objective,
        coverage_instances=coverage,
        matched_attacks=len(pairs),
        security_gain=gain,
    )
