"""JSON scenario files.

    {
      "arrival":  {"type": "poisson", "rate": 0.7},
      "services": [{"type": "poisson", "rate": 1.0}],
      "sim":      {"horizon": 100000, "replications": 100, "seed": 1, "warmup": 10000}
    }

``sim`` is optional, and so is each of its keys. Unknown keys are rejected
at every level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .bounds import TandemScenario
from .envelope import IncrementModel, Kind

MODEL_KEYS = {"type", "rate", "prob", "size"}
TOP_KEYS = {"arrival", "services", "sim"}
SIM_KEYS = {"horizon", "replications", "seed", "warmup"}


class ScenarioError(ValueError):
    """The document does not describe a valid scenario."""


@dataclass(frozen=True)
class ScenarioFile:
    scenario: TandemScenario
    sim: dict[str, int] = field(default_factory=dict)


def _number(obj: dict, key: str, where: str) -> float:
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ScenarioError(f"{where}.{key} must be a finite number, got {val!r}")
    return float(val)


def _model(obj: Any, where: str) -> IncrementModel:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where} must be an object")
    extra = set(obj) - MODEL_KEYS
    if extra:
        raise ScenarioError(f"{where}: unknown keys {sorted(extra)}")
    if "type" not in obj:
        raise ScenarioError(f"{where}: missing 'type'")
    try:
        kind = Kind(obj["type"])
    except ValueError:
        raise ScenarioError(f"{where}: unknown type {obj['type']!r}") from None
    params = {k: _number(obj, k, where) for k in ("rate", "prob", "size") if k in obj}
    try:
        return IncrementModel(kind, **params)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _sim(obj: Any) -> dict[str, int]:
    if not isinstance(obj, dict):
        raise ScenarioError("sim must be an object")
    extra = set(obj) - SIM_KEYS
    if extra:
        raise ScenarioError(f"sim: unknown keys {sorted(extra)}")
    out = {}
    for key, val in obj.items():
        if isinstance(val, bool) or not isinstance(val, int):
            raise ScenarioError(f"sim.{key} must be an integer, got {val!r}")
        out[key] = val
    return out


def parse_scenario(doc: Any) -> ScenarioFile:
    """Validate a decoded JSON document.

    Raises :class:`ScenarioError` for malformed input and
    :class:`~tandembound.bounds.UnstableError` for an overloaded tandem.
    """
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = set(doc) - TOP_KEYS
    if extra:
        raise ScenarioError(f"unknown keys {sorted(extra)}")
    for key in ("arrival", "services"):
        if key not in doc:
            raise ScenarioError(f"missing {key!r}")
    services = doc["services"]
    if not isinstance(services, list) or not services:
        raise ScenarioError("services must be a non-empty list")
    arrival = _model(doc["arrival"], "arrival")
    nodes = tuple(_model(s, f"services[{i}]") for i, s in enumerate(services))
    sim = _sim(doc["sim"]) if "sim" in doc else {}
    return ScenarioFile(TandemScenario(arrival, nodes), sim)


def load_scenario(path: str | Path) -> ScenarioFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(doc)


def _model_doc(model: IncrementModel) -> dict[str, Any]:
    doc: dict[str, Any] = {"type": model.kind.value}
    if model.kind is Kind.BERNOULLI:
        doc.update(prob=model.prob, size=model.size)
    else:
        doc["rate"] = model.rate
    return doc


def scenario_to_doc(sf: ScenarioFile) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "arrival": _model_doc(sf.scenario.arrival),
        "services": [_model_doc(s) for s in sf.scenario.services],
    }
    if sf.sim:
        doc["sim"] = dict(sf.sim)
    return doc


def dumps_scenario(sf: ScenarioFile) -> str:
    return json.dumps(scenario_to_doc(sf), indent=2) + "\n"
