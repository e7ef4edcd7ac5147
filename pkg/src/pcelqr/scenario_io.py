"""Scenario files: JSON schema validation, parsing and canonical dumping."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import PcelqrError, ScenarioError
from .linalg import CostSpec, LtiSystem, stationary_gains
from .pce import (
    PceRandomVector,
    SourceBasis,
    StochasticScenario,
    gaussian_vector,
    make_germ,
    uniform_disturbance,
)


class ScenarioParseError(ScenarioError):
    """The file is missing or is not valid JSON."""


def _data_text(name: str) -> str:
    return resources.files("pcelqr").joinpath("data", name).read_text()


def load_schema() -> dict:
    return json.loads(_data_text("scenario.schema.json"))


def example_document() -> dict:
    """The bundled CSTR scenario as a JSON document."""
    return json.loads(_data_text("cstr.json"))


def validate_document(doc: dict) -> None:
    """Raise :class:`ScenarioError` naming the offending field."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ScenarioError(f"scenario field '{where}': {err.message}")


def _source(doc: dict, field: str) -> PceRandomVector:
    kind = doc["type"]
    try:
        if kind == "uniform":
            return uniform_disturbance(doc["low"], doc["high"])
        if kind == "gaussian":
            return gaussian_vector(doc["mean"], doc["cov"])
        basis = SourceBasis(tuple(make_germ(g["family"], g["L"]) for g in doc["germs"]))
        return PceRandomVector(np.array(doc["coefficients"], dtype=float), basis)
    except (ValueError, PcelqrError) as exc:
        raise ScenarioError(f"scenario field '{field}': {exc}") from exc


def _matrix(doc, field):
    rows = {len(r) for r in doc}
    if len(rows) != 1:
        raise ScenarioError(f"scenario field '{field}': rows of unequal length")
    return np.array(doc, dtype=float)


def parse_document(doc: dict) -> StochasticScenario:
    validate_document(doc)
    s, c = doc["system"], doc["cost"]
    try:
        sys = LtiSystem(_matrix(s["A"], "system/A"), _matrix(s["B"], "system/B"), _matrix(s["E"], "system/E"))
        Q, R = _matrix(c["Q"], "cost/Q"), _matrix(c["R"], "cost/R")
        qn = c.get("Q_N", "zero")
        if qn == "zero":
            cost = CostSpec(Q, R)
        elif qn == "stationary":
            cost = CostSpec(Q, R, stationary_gains(sys, CostSpec(Q, R)).P)
        else:
            cost = CostSpec(Q, R, _matrix(qn, "cost/Q_N"))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"scenario system/cost: {exc}") from exc
    ini = _source(doc["initial_condition"], "initial_condition")
    dist = _source(doc["disturbance"], "disturbance")
    try:
        return StochasticScenario(sys, cost, ini, dist, doc["horizon"], doc.get("name", "scenario"))
    except ValueError as exc:
        raise ScenarioError(f"scenario: {exc}") from exc


def load_scenario(path) -> StochasticScenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"scenario file {path} must hold a JSON object")
    return parse_document(doc)


def _source_doc(z: PceRandomVector, field: str) -> dict:
    germs = []
    for g in z.basis.germs:
        if g.family == "custom":
            raise ScenarioError(f"{field}: custom germ families cannot be serialized")
        germs.append({"family": g.family, "L": g.L})
    return {"type": "pce", "germs": germs, "coefficients": z.coeffs.tolist()}


def dump_document(scenario: StochasticScenario) -> dict:
    """Canonical document: every source in explicit PCE form, ``Q_N`` as a matrix."""
    sys, cost = scenario.sys, scenario.cost
    return {
        "name": scenario.name,
        "system": {"A": sys.A.tolist(), "B": sys.B.tolist(), "E": sys.E.tolist()},
        "cost": {"Q": cost.Q.tolist(), "R": cost.R.tolist(), "Q_N": cost.Q_N.tolist()},
        "horizon": int(scenario.N),
        "initial_condition": _source_doc(scenario.ini, "initial_condition"),
        "disturbance": _source_doc(scenario.dist, "disturbance"),
    }


def scenarios_equal(a: StochasticScenario, b: StochasticScenario) -> bool:
    """Exact equality of every numeric field, germ family and horizon."""
    def same_source(x, y):
        fx = [(g.family, g.L) for g in x.basis.germs]
        fy = [(g.family, g.L) for g in y.basis.germs]
        return fx == fy and np.array_equal(x.coeffs, y.coeffs)

    mats = [
        (a.sys.A, b.sys.A), (a.sys.B, b.sys.B), (a.sys.E, b.sys.E),
        (a.cost.Q, b.cost.Q), (a.cost.R, b.cost.R), (a.cost.Q_N, b.cost.Q_N),
    ]
    return (
        a.N == b.N and a.name == b.name
        and all(x.shape == y.shape and np.array_equal(x, y) for x, y in mats)
        and same_source(a.ini, b.ini) and same_source(a.dist, b.dist)
    )
