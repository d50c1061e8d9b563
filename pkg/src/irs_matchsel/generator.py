"""Seeded random scenario generation.

Streams come from numpy's Philox4x64-10 counter-based bit generator, and every
draw is a ``Generator.random()`` double (53 high bits of a 64-bit output
times 2**-53) or ``Generator.integers``, consumed in this fixed order:

1. node weights, one draw per node: ``alpha = 1 - u``;
2. per attack: risk ``r = 1 - u``, then ``n_nodes`` draws marking affected
   nodes (``u < node_density``), plus one ``integers(n_nodes)`` if none hit;
3. a ``C x A`` block of draws marking coverage (``u < coverage_density``);
4. repair: each uncovered attack (ascending id) gets ``integers(C)``, then each
   idle countermeasure gets ``integers(A)``;
5. per countermeasure: time, time split, energy, energy split, money;
6. per covered (countermeasure, attack) edge in id order: reduction share
   ``1 - u`` of the attack's risk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import AttackType, CountermeasureType, Node, Scenario

TABLE1_ATTACKS = (20, 25, 30, 35, 40)
TABLE1_COUNTERMEASURES = (4, 6, 8, 10, 12)
TABLE1_COVERAGE = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
TABLE1_BUDGETS = tuple(float(x) for x in range(4, 13))


@dataclass(frozen=True)
class GeneratorParams:
    n_nodes: int = 100
    n_attacks: int = 20
    n_countermeasures: int = 10
    coverage_fraction: float = 1.0
    budget_xi: float = 12.0
    betas: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0
    coverage_density: float = 0.5
    # probability an attack hits a node; falls back to coverage_density
    node_density: float | None = None

    def check(self) -> None:
        if self.n_nodes < 1 or self.n_attacks < 1 or self.n_countermeasures < 1:
            raise ValueError(
                f"need at least one node, attack and countermeasure: "
                f"{self.n_nodes}/{self.n_attacks}/{self.n_countermeasures}"
            )
        for name in ("coverage_density", "node_density"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]: {value}")
        if not self.seed >= 0:
            raise ValueError("seed must be a non-negative integer")


def generate(params: GeneratorParams) -> Scenario:
    params.check()
    rng = np.random.Generator(np.random.Philox(params.seed))
    n, n_att, n_cm = params.n_nodes, params.n_attacks, params.n_countermeasures
    node_density = params.coverage_density if params.node_density is None else params.node_density

    nodes = [Node(i, float(1.0 - rng.random())) for i in range(n)]

    risks = []
    affected = []
    for _ in range(n_att):
        risks.append(float(1.0 - rng.random()))
        hits = [i for i, u in enumerate(rng.random(n)) if u < node_density]
        if not hits:
            hits = [int(rng.integers(n))]
        affected.append(frozenset(hits))

    cover = rng.random((n_cm, n_att)) < params.coverage_density
    for a in range(n_att):
        if not cover[:, a].any():
            cover[int(rng.integers(n_cm)), a] = True
    for c in range(n_cm):
        if not cover[c].any():
            cover[c, int(rng.integers(n_att))] = True

    costs = []
    for _ in range(n_cm):
        t, t_split, e, e_split, money = (float(x) for x in rng.random(5))
        costs.append((t * t_split, t * (1.0 - t_split), e * e_split, e * (1.0 - e_split), money))

    attacks = [AttackType(a, risks[a], 1.0, affected[a]) for a in range(n_att)]
    countermeasures = []
    for c in range(n_cm):
        covers = {}
        for a in range(n_att):
            if cover[c, a]:
                covers[a] = float(1.0 - rng.random()) * risks[a]
        t_pre, t_dep, e_pre, e_dep, money = costs[c]
        countermeasures.append(CountermeasureType(c, covers, t_pre, t_dep, e_pre, e_dep, money))

    if not math.isclose(sum(params.betas), 1.0, abs_tol=1e-9):
        raise ValueError(f"betas must sum to 1: {params.betas}")
    return Scenario(
        nodes=tuple(nodes),
        attacks=tuple(attacks),
        countermeasures=tuple(countermeasures),
        betas=tuple(params.betas),
        budget_xi=params.budget_xi,
        coverage_fraction=params.coverage_fraction,
    )
