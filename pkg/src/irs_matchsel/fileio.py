"""JSON scenario files and JSON result documents.

Scenario schema (``"format": "irs-matchsel/scenario"``, ``"version": 1``):

- ``betas``: ``[b1, b2, b3]`` weights of time, energy and money;
- ``budget_xi``: number, or ``null`` for no budget;
- ``coverage_fraction``: number in (0, 1];
- ``qos_range``: ``{"time": [lo, hi], "energy": [...], "money": [...]}``;
- ``nodes``: ``[{"id", "alpha"}]``;
- ``attacks``: ``[{"id", "severity", "probability", "affected_nodes": [ids]}]``;
- ``countermeasures``: ``[{"id", "covers": [[attack, reduction]], "t_pre",
  "t_dep", "e_pre", "e_dep", "money"}]``.

Reals are written with ``repr`` so they read back bit-exact.  Unknown keys are
accepted with a :class:`UnknownFieldWarning`.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from pathlib import Path
from typing import Any

from .bounds import BoundResult
from .matching import Solution
from .model import QOS_DIMENSIONS, AttackType, CountermeasureType, Node, Scenario

SCENARIO_FORMAT = "irs-matchsel/scenario"
SCHEMA_VERSION = 1

_TOP_KEYS = ("format", "version", "betas", "budget_xi", "coverage_fraction", "qos_range", "nodes", "attacks", "countermeasures")
_REQUIRED = ("version", "nodes", "attacks", "countermeasures")
_NODE_KEYS = ("id", "alpha")
_ATTACK_KEYS = ("id", "severity", "probability", "affected_nodes")
_CM_KEYS = ("id", "covers", "t_pre", "t_dep", "e_pre", "e_dep", "money")


class ScenarioFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, section: str | None = None):
        self.line = line
        self.column = column
        self.section = section
        where = []
        if line is not None:
            where.append(f"line {line} column {column}")
        if section is not None:
            where.append(f"section '{section}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class SchemaVersionError(ScenarioFormatError):
    pass


class UnknownFieldWarning(UserWarning):
    pass


def _dump(value: Any) -> str:
    return json.dumps(value, allow_nan=False)


def _block(items: list[str], indent: str) -> str:
    if not items:
        return "[]"
    inner = ",\n".join(indent + "  " + item for item in items)
    return "[\n" + inner + "\n" + indent + "]"


def scenario_to_json(scenario: Scenario) -> str:
    """Serialize with one entity per line so diagnostics point at an entity."""
    budget = None if math.isinf(scenario.budget_xi) else scenario.budget_xi
    nodes = [_dump({"id": n.id, "alpha": n.alpha}) for n in scenario.nodes]
    attacks = [
        _dump({"id": a.id, "severity": a.severity, "probability": a.probability, "affected_nodes": sorted(a.affected_nodes)})
        for a in scenario.attacks
    ]
    cms = [
        _dump(
            {
                "id": c.id,
                "covers": [[a, c.covers[a]] for a in sorted(c.covers)],
                "t_pre": c.t_pre,
                "t_dep": c.t_dep,
                "e_pre": c.e_pre,
                "e_dep": c.e_dep,
                "money": c.money,
            }
        )
        for c in scenario.countermeasures
    ]
    fields = [
        ("format", _dump(SCENARIO_FORMAT)),
        ("version", _dump(SCHEMA_VERSION)),
        ("betas", _dump(list(scenario.betas))),
        ("budget_xi", _dump(budget)),
        ("coverage_fraction", _dump(scenario.coverage_fraction)),
        ("qos_range", _dump({d: list(scenario.qos_range[d]) for d in QOS_DIMENSIONS})),
        ("nodes", _block(nodes, "  ")),
        ("attacks", _block(attacks, "  ")),
        ("countermeasures", _block(cms, "  ")),
    ]
    return "{\n" + ",\n".join(f'  "{k}": {v}' for k, v in fields) + "\n}\n"


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario_to_json(scenario), encoding="utf-8")


def _section_at(text: str, pos: int) -> str | None:
    """Top-level section whose key last appears before ``pos``."""
    best, best_at = None, -1
    for key in _TOP_KEYS:
        for m in re.finditer(r'"%s"\s*:' % key, text[:pos]):
            if m.start() > best_at:
                best, best_at = key, m.start()
    return best


def _warn_unknown(obj: dict, known: tuple[str, ...], where: str) -> None:
    extra = sorted(set(obj) - set(known))
    if extra:
        warnings.warn(f"ignoring unknown field(s) {extra} in {where}", UnknownFieldWarning, stacklevel=3)


def _get(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise ScenarioFormatError(f"expected an object in {where}", section=where)
    if key not in obj:
        raise ScenarioFormatError(f"missing field '{key}'", section=where)
    return obj[key]


def _real(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"expected a number, got {value!r}", section=where)
    return float(value)


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioFormatError(f"expected an integer, got {value!r}", section=where)
    return value


def scenario_from_json(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        section = _section_at(text, e.pos)
        missing = [k for k in _REQUIRED if f'"{k}"' not in text]
        detail = e.msg
        if missing:
            detail += f"; missing section(s) {missing}"
        raise ScenarioFormatError(detail, e.lineno, e.colno, section) from None
    if not isinstance(doc, dict):
        raise ScenarioFormatError("top level must be an object")
    for key in _REQUIRED:
        if key not in doc:
            raise ScenarioFormatError("required section is missing", section=key)
    version = doc["version"]
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"schema version {version!r} is not supported (expected {SCHEMA_VERSION})", section="version")
    if "format" in doc and doc["format"] != SCENARIO_FORMAT:
        raise ScenarioFormatError(f"unexpected format tag {doc['format']!r}", section="format")
    _warn_unknown(doc, _TOP_KEYS, "scenario")

    nodes = []
    for i, raw in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        _warn_unknown(raw, _NODE_KEYS, where)
        nodes.append(Node(_int(_get(raw, "id", where), where), _real(_get(raw, "alpha", where), where)))
    attacks = []
    for i, raw in enumerate(doc["attacks"]):
        where = f"attacks[{i}]"
        _warn_unknown(raw, _ATTACK_KEYS, where)
        attacks.append(
            AttackType(
                _int(_get(raw, "id", where), where),
                _real(_get(raw, "severity", where), where),
                _real(_get(raw, "probability", where), where),
                frozenset(_int(n, where) for n in _get(raw, "affected_nodes", where)),
            )
        )
    cms = []
    for i, raw in enumerate(doc["countermeasures"]):
        where = f"countermeasures[{i}]"
        _warn_unknown(raw, _CM_KEYS, where)
        covers = {}
        for edge in _get(raw, "covers", where):
            if not isinstance(edge, list) or len(edge) != 2:
                raise ScenarioFormatError(f"cover entries are [attack, reduction] pairs, got {edge!r}", section=where)
            covers[_int(edge[0], where)] = _real(edge[1], where)
        costs = [_real(_get(raw, k, where), where) for k in _CM_KEYS[2:]]
        cms.append(CountermeasureType(_int(_get(raw, "id", where), where), covers, *costs))

    kwargs: dict[str, Any] = {}
    if "betas" in doc:
        betas = doc["betas"]
        if not isinstance(betas, list) or len(betas) != 3:
            raise ScenarioFormatError("betas must list three weights", section="betas")
        kwargs["betas"] = tuple(_real(b, "betas") for b in betas)
    if "budget_xi" in doc:
        kwargs["budget_xi"] = math.inf if doc["budget_xi"] is None else _real(doc["budget_xi"], "budget_xi")
    if "coverage_fraction" in doc:
        kwargs["coverage_fraction"] = _real(doc["coverage_fraction"], "coverage_fraction")
    if "qos_range" in doc:
        ranges = doc["qos_range"]
        if not isinstance(ranges, dict):
            raise ScenarioFormatError("expected an object", section="qos_range")
        _warn_unknown(ranges, QOS_DIMENSIONS, "qos_range")
        kwargs["qos_range"] = {
            d: tuple(_real(x, "qos_range") for x in _get(ranges, d, "qos_range")) for d in QOS_DIMENSIONS
        }
    return Scenario(tuple(nodes), tuple(attacks), tuple(cms), **kwargs)


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_json(Path(path).read_text(encoding="utf-8"))


def _pairs_doc(pairs) -> list[list[int]]:
    return [[a, pairs[a]] for a in sorted(pairs)]


def solution_to_dict(solution: Solution) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "method": solution.method,
        "feasible": solution.feasible,
        "pairs": _pairs_doc(solution.pairs),
        "aggregates": solution.aggregates.as_dict() if solution.aggregates else None,
        "candidates": solution.candidates,
        "gap": solution.gap,
        "exhausted": solution.exhausted,
        "stats": {k: solution.stats[k] for k in sorted(solution.stats)},
    }
    m = solution.matching
    if m is not None:
        doc["matching"] = {
            "variant": m.variant.value,
            "start_point": m.start_point,
            "feasible_set": list(m.restricted_to.members) if m.restricted_to else None,
            "coverage": m.coverage,
            "steps": m.steps,
        }
    return doc


def bound_to_dict(result: BoundResult) -> dict[str, Any]:
    return {
        "upper_bound": result.upper_bound,
        "iterations": result.iterations,
        "duals": {"rho": result.duals.rho, "theta": list(result.duals.theta)},
        "mu": [[c, result.mu[c]] for c in sorted(result.mu)],
        "relaxed_solution": [[c, list(result.relaxed_solution[c])] for c in sorted(result.relaxed_solution)],
        "history": list(result.history),
    }


def _finite(value: Any) -> Any:
    # non-finite reals become null so the output stays strict JSON
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def dumps_result(doc: dict[str, Any]) -> str:
    return json.dumps(_finite(doc), indent=2, allow_nan=False) + "\n"


def solution_from_dict(doc: dict[str, Any]) -> dict[int, int]:
    """Attack -> countermeasure pairs of a solution document."""
    try:
        return {int(a): int(c) for a, c in doc["pairs"]}
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioFormatError(f"malformed solution document: {e}", section="pairs") from None
