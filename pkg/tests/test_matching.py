from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from irs_matchsel.feasibility import FeasibleSet, enumerate_feasible
from irs_matchsel.matching import (
    Context,
    InfeasibleMatchingError,
    Variant,
    asm,
    blocking_pairs,
    candidate_matchings,
    csm,
    matching_violations,
    solve,
    start_points,
)
from irs_matchsel.model import AttackType, CountermeasureType, Node, Scenario

from conftest import make_t1, small_scenario

BOTH = FeasibleSet((0, 1), 3)
ONLY_C1 = FeasibleSet((1,), 3)


def test_asm_t1(t1):
    ctx = Context.of(t1)
    assert asm(BOTH, ctx.prefs, ctx.index, 3).pairs == {0: 0, 1: 1}
    assert asm(ONLY_C1, ctx.prefs, ctx.index, 3).pairs == {0: 1, 1: 1}


def test_csm_t1(t1):
    ctx = Context.of(t1)
    m = csm(BOTH, ctx.prefs, ctx.index, 3)
    assert m.pairs == {0: 0, 1: 1}
    assert m.coverage == 3


def test_csm_displacement_when_attack_prefers_later_proposer():
    # c0 now costs 0.6 for a0, so a0 ranks c1 first; round 1 gives (a0,c0),(a1,c1)
    s = make_t1(c0_cost=0.3)
    ctx = Context.of(s)
    assert ctx.prefs.attack_prefs[0] == (1, 0)
    # below full coverage the run stops as soon as the threshold is met
    assert csm(BOTH, ctx.prefs, ctx.index, 2).pairs == {0: 0}
    # at full coverage proposals continue and c1 displaces c0 at a0
    full = csm(BOTH, ctx.prefs, ctx.index, 3)
    assert full.pairs == {0: 1, 1: 1}
    assert blocking_pairs(full, ctx.prefs) == []


def test_single_edge_solvers():
    s = Scenario((Node(0, 1.0),), (AttackType(0, 1.0, 1.0, frozenset({0})),),
                 (CountermeasureType(0, {0: 0.5}, 0.1, 0.1, 0.1, 0.1, 0.1),))
    ctx = Context.of(s)
    fs = FeasibleSet((0,), 1)
    assert asm(fs, ctx.prefs, ctx.index, 1).pairs == {0: 0}
    m = csm(fs, ctx.prefs, ctx.index, 1)
    assert m.pairs == {0: 0}
    assert m.steps == 1


def test_solvers_reject_bad_start_and_short_sets(t1):
    ctx = Context.of(t1)
    with pytest.raises(ValueError):
        asm(BOTH, ctx.prefs, ctx.index, 3, start=2)
    with pytest.raises(ValueError):
        csm(ONLY_C1, ctx.prefs, ctx.index, 3, start=1)
    with pytest.raises(InfeasibleMatchingError):
        asm(FeasibleSet((0,), 2), ctx.prefs, ctx.index, 3)


def test_blocking_pairs_t1(t1):
    ctx = Context.of(t1)
    for solver in (asm, csm):
        assert blocking_pairs(solver(BOTH, ctx.prefs, ctx.index, 3), ctx.prefs) == []
    (b,) = blocking_pairs({0: 1, 1: 1}, ctx.prefs)
    assert (b.attack, b.countermeasure, b.conditions) == (0, 0, (3,))


def test_empty_matching_blocked_by_every_edge(t1):
    ctx = Context.of(t1)
    got = {(b.attack, b.countermeasure) for b in blocking_pairs({}, ctx.prefs)}
    assert got == set(ctx.prefs.cost)


def test_condition_four_fires_when_countermeasure_full():
    # c0 covers a0 and a1 but a quota of 1 is imposed; it holds a1 though it prefers a0
    s = Scenario((Node(0, 1.0), Node(1, 1.0)),
                 (AttackType(0, 1.0, 1.0, frozenset({0})), AttackType(1, 1.0, 1.0, frozenset({1}))),
                 (CountermeasureType(0, {0: 0.9, 1: 0.1}, 0.1, 0.1, 0.1, 0.1, 0.1),))
    ctx = Context.of(s)
    (b,) = blocking_pairs({1: 0}, ctx.prefs, quotas={0: 1})
    assert (b.attack, b.countermeasure, b.conditions) == (0, 0, (4,))


def test_solve_t1(t1):
    sol = solve(t1, "asm")
    assert sol.feasible
    assert sol.pairs == {0: 0, 1: 1}
    assert sol.objective == pytest.approx(2.4351, abs=1e-4)
    assert sol.aggregates.total_money == pytest.approx(0.7)
    tight = solve(t1.replace(budget_xi=0.75), Variant.ASM)
    assert tight.pairs == {0: 0, 1: 1}
    for variant in Variant:
        broke = solve(t1.replace(budget_xi=0.1), variant)
        assert not broke.feasible and broke.aggregates is None
        assert broke.candidates == 2


def test_budget_filter_drops_costlier_candidate(t1):
    # both candidates of T1 are {(a0,c0),(a1,c1)} at 0.7 and {(a0,c1),(a1,c1)} at 0.8
    ctx = Context.of(t1)
    monies = sorted(
        round(sum(t1.countermeasures[c].money for c in m.pairs.values()), 9) for m in candidate_matchings(ctx, "asm")
    )
    assert monies == [0.7, 0.8]
    assert solve(t1.replace(budget_xi=0.7), "asm").feasible is False  # strict inequality


def test_full_coverage_asm_start_invariant():
    for seed in range(30):
        ctx = Context.of(small_scenario(seed, 8, 4))
        for fs in enumerate_feasible(ctx.scenario, ctx.index, ctx.threshold):
            outs = {asm(fs, ctx.prefs, ctx.index, ctx.threshold, s).key() for s in start_points(Variant.ASM, fs, ctx.index)}
            assert len(outs) == 1


def test_rotation_changes_uncovered_attack():
    # three single-node attacks, one countermeasure, two of three instances required
    s = Scenario(
        (Node(0, 1.0), Node(1, 1.0), Node(2, 1.0)),
        tuple(AttackType(i, 1.0, 1.0, frozenset({i})) for i in range(3)),
        (CountermeasureType(0, {0: 0.5, 1: 0.5, 2: 0.5}, 0.1, 0.1, 0.1, 0.1, 0.1),),
        coverage_fraction=2 / 3,
    )
    ctx = Context.of(s)
    assert ctx.threshold == 2
    fs = FeasibleSet((0,), 3)
    got = [tuple(sorted(asm(fs, ctx.prefs, ctx.index, 2, start).pairs)) for start in range(3)]
    assert got == [(0, 1), (1, 2), (0, 2)]


@given(st.integers(0, 2**32), st.integers(1, 10), st.integers(1, 5))
def test_full_coverage_outputs_stable_and_valid(seed, n_att, n_cm):
    ctx = Context.of(small_scenario(seed, n_att, n_cm))
    for variant in Variant:
        for m in candidate_matchings(ctx, variant, all_starts=True):
            assert blocking_pairs(m, ctx.prefs) == []
            assert matching_violations(m, ctx.prefs, ctx.index, require_all=True) == []
            assert m.steps <= n_att * n_cm


@given(st.integers(0, 2**32), st.integers(1, 10), st.integers(1, 5), st.sampled_from([0.5, 0.6, 0.7, 0.8, 0.9]))
def test_partial_coverage_outputs_valid(seed, n_att, n_cm, fraction):
    ctx = Context.of(small_scenario(seed, n_att, n_cm, coverage_fraction=fraction))
    for variant in Variant:
        for m in candidate_matchings(ctx, variant, all_starts=True):
            assert matching_violations(m, ctx.prefs, ctx.index) == []
            assert m.coverage >= ctx.threshold
            assert m.steps <= n_att * n_cm


def independent_blocking(pairs, scenario, members):
    """Blocking edges from first principles: costs and gains recomputed here."""
    b = scenario.betas
    def cost(a, c):
        cm = scenario.countermeasures[c]
        return max(b[0] * cm.time + b[1] * cm.energy + b[2] * cm.money, 1e-6), c
    def gain(a, c):
        return -scenario.countermeasures[c].covers[a] / scenario.attacks[a].risk, a
    held = {c: [a for a, x in pairs.items() if x == c] for c in members}
    out = set()
    for c in members:
        cm = scenario.countermeasures[c]
        for a in cm.covers:
            if pairs.get(a) == c:
                continue
            if a in pairs and cost(a, c) >= cost(a, pairs[a]):
                continue
            if len(held[c]) < len(cm.covers) or any(gain(a, c) < gain(o, c) for o in held[c]):
                out.add((a, c))
    return out


@given(st.integers(0, 2**32), st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**32))
def test_blocking_pairs_match_independent_check(seed, n_att, n_cm, pick):
    s = small_scenario(seed, n_att, n_cm)
    ctx = Context.of(s)
    # random partial matching over coverage edges
    pairs = {}
    for a in ctx.index.attack_ids:
        options = sorted(ctx.index.l_of_a[a]) + [None]
        choice = options[(pick >> (2 * a)) % len(options)]
        if choice is not None:
            pairs[a] = choice
    got = {(x.attack, x.countermeasure) for x in blocking_pairs(pairs, ctx.prefs)}
    assert got == independent_blocking(pairs, s, ctx.index.countermeasure_ids)


@given(st.integers(0, 2**32), st.floats(0.5, 1.0), st.floats(1.0, 8.0))
def test_solve_picks_best_in_budget_candidate(seed, fraction, budget):
    ctx = Context.of(small_scenario(seed, 7, 4, coverage_fraction=fraction, budget_xi=budget))
    sol = solve(ctx, "csm")
    best = None
    for m in candidate_matchings(ctx, "csm"):
        money = sum(ctx.scenario.countermeasures[c].money for c in m.pairs.values())
        if money < budget - 1e-9:
            value = sum(ctx.prefs.ratio[a, c] for a, c in m.pairs.items())
            best = value if best is None else max(best, value)
    if best is None:
        assert not sol.feasible
    else:
        assert sol.objective == pytest.approx(best, abs=1e-9)
