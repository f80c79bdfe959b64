"""File formats: model specification (JSON), prior (JSON) and dataset (CSV).

Model file, format ``cimlearn-model/1``::

    {
      "format": "cimlearn-model/1",            optional on input
      "id": "F1",                              optional
      "causes": [{"name": "C1", "cardinality": 2}, ...],
      "effect": {"name": "E", "cardinality": 2},         or "count"
      "combo": "max" | "sum" | "parity" | {"nof": 2},
      "mechanisms": [
        {"name": "X1", "parents": ["C1"], "family": "multinomial", "cardinality": 2},
        {"parents": [], "family": "poisson"}
      ],
      "params": {                              optional
        "cause_priors": [[0.5, 0.5], ...],
        "tables": [[[0.3, 0.7], [0.6, 0.4]], null],      one entry per mechanism
        "rates":  [null, [1.5]],                         one entry per mechanism
        "clamps": [{"mechanism": 0, "config": 0, "state": 0}]
      }
    }

Table rows are indexed by parent configuration, mixed radix over the
listed parents with the first parent most significant.  ``tables`` may be
omitted when there are no multinomial mechanisms, ``rates`` when there
are no Poisson ones.  Unknown keys are rejected.

Dataset file, format ``cimlearn-dataset/1``: an optional ``# format:``
comment line, a header with the cause names then the effect name, then
one case per row as integer states.  Files written with latent values
carry extra columns named after the mechanisms; readers skip them.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .core import (
    FAMILIES,
    MULTINOMIAL,
    POISSON,
    Combination,
    Dataset,
    DirichletPrior,
    Mechanism,
    ModelParams,
    ModelStructure,
    VariableSpec,
    validate,
    variable_names,
)

MODEL_FORMAT = "cimlearn-model/1"
DATASET_FORMAT = "cimlearn-dataset/1"
PRIOR_FORMAT = "cimlearn-prior/1"


class FormatError(ValueError):
    """A malformed input file; the message names the offending field or line."""


def _check_keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise FormatError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise FormatError(f"{where}: missing field(s) {missing}")


def _load_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _card(value, where):
    if value == "count":
        return None
    if not isinstance(value, int) or isinstance(value, bool) or value < 2:
        raise FormatError(f"{where}: cardinality must be an integer >= 2 or \"count\"")
    return value


def _parse_combo(value) -> Combination:
    if value in ("max", "sum", "parity"):
        return Combination(value)
    if isinstance(value, dict) and set(value) == {"nof"} and isinstance(value["nof"], int) and value["nof"] >= 1:
        return Combination("nof", value["nof"])
    raise FormatError(f"combo: expected \"max\", \"sum\", \"parity\" or {{\"nof\": N}}, got {value!r}")


def _combo_json(combo: Combination):
    return {"nof": combo.threshold} if combo.kind == "nof" else combo.kind


def structure_from_dict(obj: dict) -> ModelStructure:
    _check_keys(obj, {"format", "id", "causes", "effect", "combo", "mechanisms", "params"}, "model",
                required=("causes", "effect", "combo", "mechanisms"))
    if "format" in obj and obj["format"] != MODEL_FORMAT:
        raise FormatError(f"format: expected {MODEL_FORMAT!r}, got {obj['format']!r}")
    causes = []
    if not isinstance(obj["causes"], list):
        raise FormatError("causes: expected a list")
    for k, c in enumerate(obj["causes"]):
        _check_keys(c, {"name", "cardinality"}, f"causes[{k}]", required=("name", "cardinality"))
        card = _card(c["cardinality"], f"causes[{k}]")
        if card is None:
            raise FormatError(f"causes[{k}]: causes must have a finite cardinality")
        causes.append(VariableSpec(str(c["name"]), card))
    eff = obj["effect"]
    _check_keys(eff, {"name", "cardinality"}, "effect", required=("name", "cardinality"))
    effect = VariableSpec(str(eff["name"]), _card(eff["cardinality"], "effect"))
    names = [c.name for c in causes]
    mechs = []
    if not isinstance(obj["mechanisms"], list):
        raise FormatError("mechanisms: expected a list")
    for i, m in enumerate(obj["mechanisms"]):
        where = f"mechanisms[{i}]"
        _check_keys(m, {"name", "parents", "family", "cardinality"}, where, required=("parents", "family"))
        family = m["family"]
        if family not in FAMILIES:
            raise FormatError(f"{where}.family: expected one of {FAMILIES}, got {family!r}")
        parents = []
        for p in m["parents"]:
            if p not in names:
                raise FormatError(f"{where}.parents: unknown cause {p!r}")
            parents.append(names.index(p))
        if family == MULTINOMIAL:
            if "cardinality" not in m:
                raise FormatError(f"{where}: multinomial mechanisms need a cardinality")
            card = _card(m["cardinality"], where)
        else:
            if m.get("cardinality", "count") != "count":
                raise FormatError(f"{where}: poisson mechanisms range over the counting numbers")
            card = None
        mechs.append(Mechanism(tuple(parents), family, card, str(m.get("name", f"X{i + 1}"))))
    structure = ModelStructure(tuple(causes), effect, tuple(mechs), _parse_combo(obj["combo"]), str(obj.get("id", "")))
    problems = validate(structure)
    if problems:
        raise FormatError("invalid model: " + "; ".join(problems))
    return structure


def params_from_dict(structure: ModelStructure, obj: dict) -> ModelParams:
    _check_keys(obj, {"cause_priors", "tables", "rates", "clamps"}, "params", required=("cause_priors",))
    m = structure.n_mechanisms
    tables = obj.get("tables", [None] * m)
    rates = obj.get("rates", [None] * m)
    for key, val in (("tables", tables), ("rates", rates)):
        if not isinstance(val, list) or len(val) != m:
            raise FormatError(f"params.{key}: expected a list with one entry per mechanism ({m})")
    clamps = []
    for k, c in enumerate(obj.get("clamps", [])):
        _check_keys(c, {"mechanism", "config", "state"}, f"params.clamps[{k}]", required=("mechanism", "config", "state"))
        clamps.append((c["mechanism"], c["config"], c["state"]))
    try:
        params = ModelParams(
            tuple(np.asarray(p, dtype=float) for p in obj["cause_priors"]),
            tuple(None if t is None else np.asarray(t, dtype=float) for t in tables),
            tuple(None if r is None else np.asarray(r, dtype=float) for r in rates),
            frozenset(clamps),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"params: {exc}") from None
    problems = validate(structure, params)
    if problems:
        raise FormatError("invalid params: " + "; ".join(problems))
    return params


def model_from_dict(obj: dict) -> tuple[ModelStructure, ModelParams | None]:
    structure = structure_from_dict(obj)
    params = params_from_dict(structure, obj["params"]) if obj.get("params") is not None else None
    return structure, params


def model_to_dict(structure: ModelStructure, params: ModelParams | None = None) -> dict:
    names = [c.name for c in structure.causes]
    out = {
        "format": MODEL_FORMAT,
        "id": structure.model_id,
        "causes": [{"name": c.name, "cardinality": c.cardinality} for c in structure.causes],
        "effect": {"name": structure.effect.name, "cardinality": structure.effect.cardinality or "count"},
        "combo": _combo_json(structure.combo),
        "mechanisms": [],
    }
    for mech in structure.mechanisms:
        entry = {"name": mech.name, "parents": [names[p] for p in mech.parents], "family": mech.family}
        entry["cardinality"] = mech.cardinality if mech.family == MULTINOMIAL else "count"
        out["mechanisms"].append(entry)
    if params is not None:
        out["params"] = {
            "cause_priors": [p.tolist() for p in params.cause_priors],
            "tables": [None if t is None else t.tolist() for t in params.tables],
            "rates": [None if r is None else r.tolist() for r in params.rates],
            "clamps": [{"mechanism": i, "config": j, "state": k} for i, j, k in sorted(params.clamps)],
        }
    return out


def load_model(path) -> tuple[ModelStructure, ModelParams | None]:
    path = Path(path)
    try:
        return model_from_dict(_load_json(path.read_text(), str(path)))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def dumps_model(structure: ModelStructure, params: ModelParams | None = None) -> str:
    return json.dumps(model_to_dict(structure, params), indent=2) + "\n"


def save_model(path, structure: ModelStructure, params: ModelParams | None = None) -> None:
    Path(path).write_text(dumps_model(structure, params))


# ---------------------------------------------------------------------------
# priors


def prior_from_dict(structure: ModelStructure, obj: dict) -> DirichletPrior:
    _check_keys(obj, {"format", "alpha", "gamma", "cause_alpha", "mech_alpha"}, "prior")
    gamma = obj.get("gamma", [1.0, 0.01])
    base = DirichletPrior.uniform(structure, float(obj.get("alpha", 1.0)), tuple(gamma))
    cause_alpha = obj.get("cause_alpha")
    mech_alpha = obj.get("mech_alpha")
    try:
        return DirichletPrior(
            tuple(np.asarray(a, dtype=float) for a in cause_alpha) if cause_alpha is not None else base.cause_alpha,
            tuple(None if a is None else np.asarray(a, dtype=float) for a in mech_alpha) if mech_alpha is not None else base.mech_alpha,
            base.gamma,
        )
    except ValueError as exc:
        raise FormatError(f"prior: {exc}") from None


def load_prior(path, structure: ModelStructure) -> DirichletPrior:
    path = Path(path)
    try:
        return prior_from_dict(structure, _load_json(path.read_text(), str(path)))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# datasets


def dumps_dataset(data: Dataset, latent: np.ndarray | None = None, latent_names=()) -> str:
    buf = io.StringIO()
    buf.write(f"# format: {DATASET_FORMAT}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(data.names) + list(latent_names if latent is not None else ()))
    values = data.values if latent is None else np.column_stack([data.values, latent])
    w.writerows(values.tolist())
    return buf.getvalue()


def save_dataset(path, data: Dataset, latent=None, latent_names=()) -> None:
    Path(path).write_text(dumps_dataset(data, latent, latent_names))


def parse_dataset(text: str, structure: ModelStructure, source: str = "<data>") -> Dataset:
    expected = list(variable_names(structure))
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = [f.strip() for f in fields]
            if header[: len(expected)] != expected:
                raise FormatError(f"{source}: line {lineno}: header {header} does not start with {expected}")
            width = len(header)
            continue
        if len(fields) != width:
            raise FormatError(f"{source}: line {lineno}: expected {width} fields, got {len(fields)}")
        try:
            values = [int(f) for f in fields[: len(expected)]]
        except ValueError:
            raise FormatError(f"{source}: line {lineno}: missing or non-integer entry") from None
        for name, spec, v in zip(expected, list(structure.causes) + [structure.effect], values):
            if not spec.contains(v):
                raise FormatError(f"{source}: line {lineno}: value {v} outside the domain of {name!r}")
        rows.append(values)
    if header is None:
        raise FormatError(f"{source}: no header row")
    return Dataset(tuple(expected), np.array(rows, dtype=np.int64).reshape(-1, len(expected)))


def load_dataset(path, structure: ModelStructure) -> Dataset:
    path = Path(path)
    return parse_dataset(path.read_text(), structure, str(path))
