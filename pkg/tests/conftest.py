from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from irs_matchsel.generator import GeneratorParams, generate
from irs_matchsel.model import AttackType, CountermeasureType, Node, Scenario

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_t1(c0_cost: float = 0.2, budget: float = 1.0, fraction: float = 1.0) -> Scenario:
    """Two nodes, two attacks, two countermeasures.

    a0 (risk 0.8) hits n0 (alpha 1.0) and n1 (alpha 0.5); a1 (risk 0.6) hits n1.
    c0 covers a0 (reduction 0.4), each time/energy part ``c0_cost``, money 0.3.
    c1 covers a0 (0.2) and a1 (0.3), each time/energy part 0.25, money 0.4.
    """
    nodes = (Node(0, 1.0), Node(1, 0.5))
    attacks = (AttackType(0, 0.8, 1.0, frozenset({0, 1})), AttackType(1, 0.6, 1.0, frozenset({1})))
    c0_money = 0.3 if c0_cost == 0.2 else 2 * c0_cost
    cms = (
        CountermeasureType(0, {0: 0.4}, c0_cost, c0_cost, c0_cost, c0_cost, c0_money),
        CountermeasureType(1, {0: 0.2, 1: 0.3}, 0.25, 0.25, 0.25, 0.25, 0.4),
    )
    return Scenario(nodes, attacks, cms, budget_xi=budget, coverage_fraction=fraction)


@pytest.fixture
def t1() -> Scenario:
    return make_t1()


def small_scenario(seed: int, n_attacks: int, n_countermeasures: int, n_nodes: int = 12, **kw) -> Scenario:
    return generate(
        GeneratorParams(n_nodes=n_nodes, n_attacks=n_attacks, n_countermeasures=n_countermeasures, seed=seed, **kw)
    )


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
