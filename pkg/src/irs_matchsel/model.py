"""Scenario data model and the derived coverage index.

A scenario lists network nodes, detected attack types and the repository of
countermeasure types.  A countermeasure addresses an attack type on every node
that attack affects, so coverage is tracked per attack type and expanded to
(node, attack) instances only when counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

QOS_DIMENSIONS = ("time", "energy", "money")
DEFAULT_QOS_RANGE = {dim: (0.0, 1.0) for dim in QOS_DIMENSIONS}


class InvalidScenarioError(ValueError):
    """Raised when an operation is handed a scenario that fails validation."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid scenario: {lines}{more}")


@dataclass(frozen=True)
class Node:
    id: int
    alpha: float


@dataclass(frozen=True)
class AttackType:
    id: int
    severity: float
    probability: float
    affected_nodes: frozenset[int]

    @property
    def risk(self) -> float:
        """Risk factor, severity times probability."""
        return self.severity * self.probability


@dataclass(frozen=True)
class CountermeasureType:
    """A countermeasure type with per-attack risk reduction and QoS costs.

    ``covers`` maps attack id to the risk reduction achieved on that attack.
    """

    id: int
    covers: Mapping[int, float]
    t_pre: float = 0.0
    t_dep: float = 0.0
    e_pre: float = 0.0
    e_dep: float = 0.0
    money: float = 0.0

    @property
    def time(self) -> float:
        return self.t_pre + self.t_dep

    @property
    def energy(self) -> float:
        return self.e_pre + self.e_dep

    def raw_cost(self, dim: str) -> float:
        if dim == "time":
            return self.time
        if dim == "energy":
            return self.energy
        if dim == "money":
            return self.money
        raise KeyError(dim)


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[Node, ...]
    attacks: tuple[AttackType, ...]
    countermeasures: tuple[CountermeasureType, ...]
    betas: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    budget_xi: float = math.inf
    coverage_fraction: float = 1.0
    qos_range: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_QOS_RANGE)
    )

    def __post_init__(self):
        # accept lists for convenience; store tuples
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "attacks", tuple(self.attacks))
        object.__setattr__(self, "countermeasures", tuple(self.countermeasures))
        object.__setattr__(self, "betas", tuple(self.betas))

    def replace(self, **changes) -> Scenario:
        fields = {
            "nodes": self.nodes,
            "attacks": self.attacks,
            "countermeasures": self.countermeasures,
            "betas": self.betas,
            "budget_xi": self.budget_xi,
            "coverage_fraction": self.coverage_fraction,
            "qos_range": self.qos_range,
        }
        fields.update(changes)
        return Scenario(**fields)


@dataclass(frozen=True)
class Violation:
    kind: str  # node | attack | countermeasure | scenario
    id: int | None
    field: str
    message: str

    def __str__(self) -> str:
        where = self.kind if self.id is None else f"{self.kind} {self.id}"
        return f"{where}.{self.field}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check_dense_ids(kind: str, ids: list[int], out: list[Violation]) -> None:
    if sorted(ids) != list(range(len(ids))):
        out.append(Violation(kind, None, "id", f"{kind} ids must be dense and 0-based, got {sorted(ids)}"))


def validate(scenario: Scenario) -> ValidationReport:
    """Collect every invariant violation in ``scenario``.

    Violations are returned as data; nothing is raised.
    """
    out: list[Violation] = []
    node_ids = [n.id for n in scenario.nodes]
    attack_ids = [a.id for a in scenario.attacks]
    _check_dense_ids("node", node_ids, out)
    _check_dense_ids("attack", attack_ids, out)
    _check_dense_ids("countermeasure", [c.id for c in scenario.countermeasures], out)
    known_nodes = set(node_ids)
    risk = {a.id: a.risk for a in scenario.attacks}

    for n in scenario.nodes:
        if not (0.0 < n.alpha <= 1.0):
            out.append(Violation("node", n.id, "alpha", f"alpha out of (0,1]: {n.alpha}"))

    for a in scenario.attacks:
        if not (0.0 <= a.severity <= 10.0):
            out.append(Violation("attack", a.id, "severity", f"severity out of [0,10]: {a.severity}"))
        if not (0.0 <= a.probability <= 1.0):
            out.append(Violation("attack", a.id, "probability", f"probability out of [0,1]: {a.probability}"))
        if not a.affected_nodes:
            out.append(Violation("attack", a.id, "affected_nodes", "attack affects no node"))
        unknown = sorted(set(a.affected_nodes) - known_nodes)
        if unknown:
            out.append(Violation("attack", a.id, "affected_nodes", f"unknown node ids {unknown}"))

    covered: set[int] = set()
    for c in scenario.countermeasures:
        if not c.covers:
            out.append(Violation("countermeasure", c.id, "covers", "countermeasure covers no attack"))
        for a_id, delta in c.covers.items():
            if a_id not in risk:
                out.append(Violation("countermeasure", c.id, "covers", f"unknown attack id {a_id}"))
                continue
            covered.add(a_id)
            if not (0.0 < delta <= risk[a_id] + 1e-12):
                out.append(
                    Violation(
                        "countermeasure", c.id, "covers",
                        f"risk reduction for attack {a_id} must lie in (0, R_a={risk[a_id]}]: {delta}",
                    )
                )
        for name in ("t_pre", "t_dep", "e_pre", "e_dep", "money"):
            value = getattr(c, name)
            if not (value >= 0.0 and math.isfinite(value)):
                out.append(Violation("countermeasure", c.id, name, f"cost must be finite and >= 0: {value}"))

    for a_id in sorted(covered):
        if risk[a_id] <= 0.0:
            out.append(Violation("attack", a_id, "risk", "covered attack must have positive risk factor"))

    if len(scenario.betas) != 3:
        out.append(Violation("scenario", None, "betas", "exactly three QoS weights required"))
    else:
        if any(b < 0 for b in scenario.betas):
            out.append(Violation("scenario", None, "betas", f"betas must be non-negative: {scenario.betas}"))
        if abs(sum(scenario.betas) - 1.0) > 1e-9:
            out.append(Violation("scenario", None, "betas", f"betas must sum to 1, got {sum(scenario.betas)}"))
    if not scenario.budget_xi > 0:
        out.append(Violation("scenario", None, "budget_xi", f"budget must be > 0: {scenario.budget_xi}"))
    if not (0.0 < scenario.coverage_fraction <= 1.0):
        out.append(
            Violation("scenario", None, "coverage_fraction", f"coverage fraction out of (0,1]: {scenario.coverage_fraction}")
        )
    for dim in QOS_DIMENSIONS:
        if dim not in scenario.qos_range:
            out.append(Violation("scenario", None, "qos_range", f"missing range for {dim}"))
            continue
        lo, hi = scenario.qos_range[dim]
        if hi < lo:
            out.append(Violation("scenario", None, "qos_range", f"{dim} range has x_max < x_min"))
    return ValidationReport(tuple(out))


def require_valid(scenario: Scenario) -> None:
    report = validate(scenario)
    if not report.ok:
        raise InvalidScenarioError(list(report.violations))


@dataclass(frozen=True)
class DerivedIndex:
    """Coverage lists derived from a scenario.

    ``l_of_a[a]`` are the countermeasures able to address attack ``a``;
    ``w_of_c[c]`` the attacks countermeasure ``c`` addresses; ``v_of_c[c]`` the
    (node, attack) instances it addresses.
    """

    l_of_a: Mapping[int, frozenset[int]]
    w_of_c: Mapping[int, frozenset[int]]
    v_of_c: Mapping[int, frozenset[tuple[int, int]]]
    n_a: Mapping[int, int]
    total_instances: int
    rf: Mapping[int, float]
    # attack-set bitmask per countermeasure; bit a set iff a in w_of_c[c]
    mask_of_c: Mapping[int, int] = field(compare=False)

    @property
    def attack_ids(self) -> list[int]:
        return sorted(self.n_a)

    @property
    def countermeasure_ids(self) -> list[int]:
        return sorted(self.w_of_c)

    def instances_of_mask(self, mask: int) -> int:
        """Number of (node, attack) instances of the attacks in ``mask``."""
        total = 0
        while mask:
            low = mask & -mask
            total += self.n_a[low.bit_length() - 1]
            mask ^= low
        return total


def build_index(scenario: Scenario) -> DerivedIndex:
    require_valid(scenario)
    n_a = {a.id: len(a.affected_nodes) for a in scenario.attacks}
    rf = {a.id: a.risk for a in scenario.attacks}
    affected = {a.id: a.affected_nodes for a in scenario.attacks}
    l_of_a: dict[int, set[int]] = {a.id: set() for a in scenario.attacks}
    w_of_c: dict[int, frozenset[int]] = {}
    v_of_c: dict[int, frozenset[tuple[int, int]]] = {}
    mask_of_c: dict[int, int] = {}
    for c in scenario.countermeasures:
        attacks = frozenset(c.covers)
        w_of_c[c.id] = attacks
        v_of_c[c.id] = frozenset((n, a) for a in attacks for n in affected[a])
        mask = 0
        for a in attacks:
            l_of_a[a].add(c.id)
            mask |= 1 << a
        mask_of_c[c.id] = mask
    return DerivedIndex(
        l_of_a={a: frozenset(cs) for a, cs in l_of_a.items()},
        w_of_c=w_of_c,
        v_of_c=v_of_c,
        n_a=n_a,
        total_instances=sum(n_a.values()),
        rf=rf,
        mask_of_c=mask_of_c,
    )
