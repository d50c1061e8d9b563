"""Seeded experiment sweeps producing CSV tables.

Run ``r`` of a sweep uses generator seed ``base_seed + r`` in every cell, so
cells differing only in budget share their scenario and candidate matchings.
An infeasible run contributes zeros to every mean and is counted in the
``infeasible`` column.

Sweep table columns, in order: ``experiment, variant, n_nodes, n_attacks,
n_countermeasures, coverage_fraction, budget_xi, beta_time, beta_energy,
beta_money, coverage_density, runs, infeasible, failed`` followed by
``mean_<m>, std_<m>`` for each metric in :data:`METRICS`.  Metrics ending in
``_pa`` are divided by the number of matched attacks.  ``std`` is the sample
standard deviation.

Pareto table columns: see :data:`PARETO_COLUMNS`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .bounds import InstanceTooLargeError
from .feasibility import EnumerationCapError, enumerate_feasible
from .generator import GeneratorParams, generate
from .matching import Context, Variant, candidate_matchings, select_best
from .pareto import SolutionPoint, multi_start, pareto_front
from .utility import BudgetSemantics

EXPERIMENTS = ("beta-sweep", "budget-sweep", "size-sweep", "coverage-sweep", "pareto")
THREADS_ENV = "IRS_MATCHSEL_THREADS"

METRICS = (
    "time",
    "energy",
    "money",
    "security",
    "qos_cost",
    "objective",
    "coverage",
    "matched",
    "time_pa",
    "energy_pa",
    "money_pa",
    "security_pa",
    "qos_cost_pa",
    "objective_pa",
)
KEY_COLUMNS = (
    "experiment",
    "variant",
    "n_nodes",
    "n_attacks",
    "n_countermeasures",
    "coverage_fraction",
    "budget_xi",
    "beta_time",
    "beta_energy",
    "beta_money",
    "coverage_density",
    "runs",
    "infeasible",
    "failed",
)
SWEEP_COLUMNS = KEY_COLUMNS + tuple(f"{s}_{m}" for m in METRICS for s in ("mean", "std"))
PARETO_COLUMNS = (
    "seed",
    "feasible_set",
    "variant",
    "start_point",
    "qos_cost",
    "neg_qos_cost",
    "security",
    "money",
    "pairs",
    "on_set_front",
    "on_front",
)
GUARD_ERRORS = (EnumerationCapError, InstanceTooLargeError)


class ExperimentError(RuntimeError):
    def __init__(self, failures: list[dict[str, Any]], manifest: str | None = None):
        self.failures = failures
        self.manifest = manifest
        where = f"; manifest {manifest}" if manifest else ""
        super().__init__(f"{len(failures)} run(s) failed{where}: {failures[0]['error']}")

    @property
    def guard_tripped(self) -> bool:
        return any(f["guard"] for f in self.failures)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    runs: int
    fixed: Mapping[str, Any] = field(default_factory=dict)
    cells: tuple[Mapping[str, Any], ...] = ({},)
    variant: str = "both"
    base_seed: int = 0
    semantics: BudgetSemantics = BudgetSemantics.PER_PAIR
    output: str | None = None

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if self.runs < 1:
            raise ValueError("runs must be positive")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")
        object.__setattr__(self, "semantics", BudgetSemantics.parse(self.semantics))
        object.__setattr__(self, "cells", tuple(self.cells))
        self.variants  # validates the variant name
        for cell in self.cells:
            self.params(cell, 0).check()

    @property
    def variants(self) -> tuple[Variant, ...]:
        if self.variant == "both":
            return (Variant.ASM, Variant.CSM)
        return (Variant.parse(self.variant),)

    def params(self, cell: Mapping[str, Any], run: int) -> GeneratorParams:
        merged = {**self.fixed, **cell}
        if "betas" in merged:
            merged["betas"] = tuple(merged["betas"])
        return GeneratorParams(**merged, seed=self.base_seed + run)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> ExperimentConfig:
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown experiment config field(s) {sorted(extra)}")
        return cls(**{**doc, "cells": tuple(doc.get("cells", ({},)))})


EQUAL = (1 / 3, 1 / 3, 1 / 3)
BETA_GRID = ((0.9, 0.05, 0.05), (0.05, 0.9, 0.05), (0.05, 0.05, 0.9), EQUAL)
SIZE_FIXED_C = 8


def preset(name: str, runs: int | None = None, base_seed: int = 0, variant: str = "both") -> ExperimentConfig:
    """Named sweeps with their fixed settings embedded."""
    if name == "beta-sweep":
        fixed = dict(n_attacks=10, n_countermeasures=4, coverage_fraction=0.9, budget_xi=6.0)
        cells = tuple({"betas": b} for b in BETA_GRID)
        default_runs = 1000
    elif name == "budget-sweep":
        fixed = dict(n_attacks=20, n_countermeasures=10, coverage_fraction=1.0, betas=EQUAL)
        cells = tuple({"budget_xi": float(x)} for x in range(4, 13))
        default_runs = 200
    elif name == "size-sweep":
        fixed = dict(coverage_fraction=0.9, budget_xi=15.0, betas=EQUAL)
        cells = tuple({"n_attacks": 20, "n_countermeasures": c} for c in (4, 6, 8, 10, 12))
        cells += tuple({"n_attacks": a, "n_countermeasures": SIZE_FIXED_C} for a in (25, 30, 35, 40))
        default_runs = 200
    elif name == "coverage-sweep":
        fixed = dict(n_attacks=10, n_countermeasures=4, budget_xi=6.0, betas=EQUAL)
        cells = tuple({"coverage_fraction": m} for m in (0.5, 0.6, 0.7, 0.8, 0.9, 1.0))
        default_runs = 500
    elif name == "pareto":
        fixed = dict(n_attacks=20, n_countermeasures=4, budget_xi=7.0, coverage_fraction=0.8, betas=EQUAL)
        cells = ({},)
        default_runs = 200
    else:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    return ExperimentConfig(name, runs or default_runs, fixed, cells, variant, base_seed)


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def worker_count(requested: int | None = None) -> int:
    """Requested workers (default: CPU count), capped by ``IRS_MATCHSEL_THREADS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def run_metrics(solution) -> tuple[float, ...] | None:
    """Metric tuple in :data:`METRICS` order, or None when infeasible."""
    agg = solution.aggregates
    if not solution.feasible or agg is None:
        return None
    totals = (
        agg.total_time,
        agg.total_energy,
        agg.total_money,
        agg.security_utility,
        agg.qos_cost,
        agg.objective,
        float(agg.coverage_instances),
        float(agg.matched_attacks),
    )
    per = tuple(
        agg.per_attack(v)
        for v in (agg.total_time, agg.total_energy, agg.total_money, agg.security_gain, agg.qos_cost, agg.objective)
    )
    return totals + per


def _group_cells(config: ExperimentConfig) -> list[list[int]]:
    """Cell indices grouped by everything except the budget."""
    groups: dict[GeneratorParams, list[int]] = {}
    for i, cell in enumerate(config.cells):
        key = replace(config.params(cell, 0), budget_xi=0.0)
        groups.setdefault(key, []).append(i)
    return list(groups.values())


def _sweep_task(args) -> dict[tuple[int, str], tuple[float, ...] | None]:
    config, cells, run = args
    scenario = generate(config.params(config.cells[cells[0]], run))
    ctx = Context.of(scenario)
    sets = enumerate_feasible(ctx.scenario, ctx.index, ctx.threshold)
    out = {}
    for variant in config.variants:
        candidates = candidate_matchings(ctx, variant, feasible_sets=sets)
        for i in cells:
            budget = config.params(config.cells[i], run).budget_xi
            sol = select_best(ctx, candidates, budget, config.semantics, method=variant.value)
            out[i, variant.value] = run_metrics(sol)
    return out


class _Guarded:
    """Picklable wrapper returning an exception instead of raising it."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, task):
        try:
            return self.fn(task)
        except Exception as e:  # recorded in the failure manifest
            return e


def _run_tasks(fn, tasks: list, workers: int | None) -> list:
    """Apply ``fn`` to each task; results (or caught exceptions) in task order."""
    guarded = _Guarded(fn)
    n = worker_count(workers)
    if n == 1 or len(tasks) < 2:
        return [guarded(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(guarded, tasks, chunksize=max(1, len(tasks) // (4 * n))))


def _failure(run: int, cells: Sequence[int], error: Exception) -> dict[str, Any]:
    return {
        "run": run,
        "cells": list(cells),
        "error": f"{type(error).__name__}: {error}",
        "guard": isinstance(error, GUARD_ERRORS),
    }


def _summary(values: list[float]) -> tuple[float, float]:
    mean = math.fsum(values) / len(values) if values else 0.0
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> list[dict[str, Any]]:
    """Rows of the result table; raises :class:`ExperimentError` after flushing partial output."""
    if config.name == "pareto":
        rows, failures = _run_pareto(config, workers)
        columns = PARETO_COLUMNS
    else:
        rows, failures = _run_sweep(config, workers)
        columns = SWEEP_COLUMNS
    if config.output:
        write_csv(rows, config.output, columns)
    if failures:
        manifest = None
        if config.output:
            manifest = str(config.output) + ".failures.json"
            Path(manifest).write_text(json.dumps(failures, indent=2) + "\n", encoding="utf-8")
        raise ExperimentError(failures, manifest)
    return rows


def _run_sweep(config: ExperimentConfig, workers: int | None):
    groups = _group_cells(config)
    tasks = [(config, cells, run) for cells in groups for run in range(config.runs)]
    results = _run_tasks(_sweep_task, tasks, workers)
    samples: dict[tuple[int, str], list[tuple[float, ...] | None]] = {}
    failed: dict[int, int] = {}
    failures = []
    for (_, cells, run), result in zip(tasks, results):
        if isinstance(result, Exception):
            failures.append(_failure(run, cells, result))
            for i in cells:
                failed[i] = failed.get(i, 0) + 1
            continue
        for key, metrics in result.items():
            samples.setdefault(key, []).append(metrics)
    rows = []
    for i, cell in enumerate(config.cells):
        params = config.params(cell, 0)
        for variant in config.variants:
            runs = samples.get((i, variant.value), [])
            zero = (0.0,) * len(METRICS)
            filled = [m if m is not None else zero for m in runs]
            row: dict[str, Any] = {
                "experiment": config.name,
                "variant": variant.value,
                "n_nodes": params.n_nodes,
                "n_attacks": params.n_attacks,
                "n_countermeasures": params.n_countermeasures,
                "coverage_fraction": params.coverage_fraction,
                "budget_xi": params.budget_xi,
                "beta_time": params.betas[0],
                "beta_energy": params.betas[1],
                "beta_money": params.betas[2],
                "coverage_density": params.coverage_density,
                "runs": len(runs),
                "infeasible": sum(m is None for m in runs),
                "failed": failed.get(i, 0),
            }
            for k, name in enumerate(METRICS):
                row[f"mean_{name}"], row[f"std_{name}"] = _summary([m[k] for m in filled])
            rows.append(row)
    return rows, failures


def point_rows(points: Sequence[SolutionPoint], seed: int | None = None) -> list[dict[str, Any]]:
    """Plot-ready rows for multi-start points; QoS cost is also emitted negated."""
    front = {id(p) for p in pareto_front(points)}
    by_set: dict[tuple[int, ...], list[SolutionPoint]] = {}
    for p in points:
        by_set.setdefault(p.feasible_set.members, []).append(p)
    set_front = {id(p) for group in by_set.values() for p in pareto_front(group)}
    rows = []
    for p in points:
        rows.append(
            {
                "seed": "" if seed is None else seed,
                "feasible_set": " ".join(map(str, p.feasible_set.members)),
                "variant": p.variant.value,
                "start_point": p.start_point,
                "qos_cost": p.qos_cost,
                "neg_qos_cost": -p.qos_cost,
                "security": p.security_utility,
                "money": p.money_spent,
                "pairs": " ".join(f"{a}:{c}" for a, c in p.matching.key()),
                "on_set_front": int(id(p) in set_front),
                "on_front": int(id(p) in front),
            }
        )
    return rows


def scenario_points(ctx: Context, variants: Iterable[Variant], semantics=BudgetSemantics.PER_PAIR) -> list[SolutionPoint]:
    sets = enumerate_feasible(ctx.scenario, ctx.index, ctx.threshold)
    points = []
    for variant in variants:
        points.extend(multi_start(ctx, variant, sets, semantics=semantics))
    return points


def _pareto_task(args) -> list[dict[str, Any]]:
    config, run = args
    params = config.params(config.cells[0], run)
    ctx = Context.of(generate(params))
    return point_rows(scenario_points(ctx, config.variants, config.semantics), params.seed)


def _run_pareto(config: ExperimentConfig, workers: int | None):
    if len(config.cells) != 1:
        raise ValueError("the pareto experiment takes a single cell")
    tasks = [(config, run) for run in range(config.runs)]
    rows, failures = [], []
    for (_, run), result in zip(tasks, _run_tasks(_pareto_task, tasks, workers)):
        if isinstance(result, Exception):
            failures.append(_failure(run, [0], result))
        else:
            rows.extend(result)
    return rows, failures


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def write_csv(rows: Iterable[Mapping[str, Any]], path: str | Path, columns: Sequence[str]) -> None:
    Path(path).write_text(to_csv(rows, columns), encoding="utf-8")


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    doc = asdict(config)
    doc["semantics"] = config.semantics.value
    return doc
