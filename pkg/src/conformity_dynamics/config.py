"""JSON experiment configuration.

A config document describes one scenario (model, mechanism, logit
parameters, initial and target states, time grid), the certificates to
evaluate, the convergence criterion, an optional kappa sweep and an output
directory.  :func:`load_config` validates it against a JSON schema (unknown
keys are rejected), materialises every default and builds the
:class:`~conformity_dynamics.sim.Scenario`.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .bias import AdditiveBias, MultiplicativeBias, TabulatedCurve, _make_curves
from .dynamics import LogitParams
from .mechanisms import PIMechanism, SaturatedPIMechanism
from .sim import ConstantCost, Scenario, SinusoidalCost

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "SCHEMA"]

CERTIFICATES = ["lemma1", "lemma2", "lemma3", "lemma4", "lemma6", "V1", "V2", "interconnection"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 2}
_num_or_vec = {"oneOf": [_num, _vec]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["n", "model"],
    "properties": {
        "n": {"type": "integer", "minimum": 2},
        "logit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"eta": _pos, "beta": _pos},
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["unbiased", "additive", "multiplicative"]},
                "family": {"enum": ["affine", "smoothstep", "tabulated"]},
                "intercept": _num_or_vec,
                "slope": _num_or_vec,
                "bend": _num_or_vec,
                "csv": {"oneOf": [{"type": "string"},
                                  {"type": "array", "items": {"type": "string"}}]},
            },
        },
        "mechanism": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["none", "pi", "saturated"]},
                "rho": _pos,
                "kappa": _pos,
                "alpha": _pos,
                "t_bar": _pos,
            },
        },
        "cost": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "values"],
                    "properties": {"kind": {"const": "constant"}, "values": _vec},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "offset", "amplitude", "frequency", "phase"],
                    "properties": {
                        "kind": {"const": "sinusoid"},
                        "offset": _vec,
                        "amplitude": {"type": "array", "items": _vec},
                        "frequency": {"type": "array", "items": _num},
                        "phase": {"type": "array", "items": _vec},
                    },
                },
            ]
        },
        "pi0": {"oneOf": [{"type": "null"}, _vec]},
        "seed": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
        "pi_star": {"oneOf": [{"type": "null"}, _vec]},
        "mu0": {"oneOf": [{"type": "null"}, _vec]},
        "horizon": _pos,
        "step": {"oneOf": [{"type": "null"}, _pos]},
        "record_interval": {"oneOf": [{"type": "null"}, _pos]},
        "certificates": {
            "oneOf": [
                {"const": "auto"},
                {"type": "array", "items": {"enum": CERTIFICATES}, "uniqueItems": True},
            ]
        },
        "convergence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"epsilon": _pos, "window": _pos},
        },
        "sweep": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kappa"],
                    "properties": {"kappa": {"type": "array", "items": _pos}},
                },
            ]
        },
        "output_dir": {"type": "string"},
    },
}

_MODEL_DEFAULTS = {
    ("additive", "affine"): {"intercept": 1.0, "slope": 1.0},
    ("additive", "smoothstep"): {"intercept": 1.0, "slope": 1.0, "bend": 1.0},
    ("multiplicative", "affine"): {"intercept": 1.5, "slope": 1.0},
    ("multiplicative", "smoothstep"): {"intercept": 2.0, "slope": 0.5, "bend": 0.5},
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source when known."""

    def __init__(self, message, line=None, source=None):
        where = f"{source or '<config>'}:{line}: " if line else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


@dataclass
class ExperimentConfig:
    """A validated config with all defaults filled in, plus the built scenario."""

    data: dict
    scenario: Scenario
    base_dir: Path

    @property
    def certificates(self):
        return self.data["certificates"]

    @property
    def epsilon(self):
        return self.data["convergence"]["epsilon"]

    @property
    def window(self):
        return self.data["convergence"]["window"]

    @property
    def sweep_kappas(self):
        sweep = self.data["sweep"]
        return None if sweep is None else list(sweep["kappa"])

    @property
    def output_dir(self):
        return self.data["output_dir"]

    @property
    def theorem(self):
        """1 or 2 for the paired model/mechanism combinations, else ``None``."""
        model, mech = self.data["model"]["kind"], self.data["mechanism"]["kind"]
        return {("additive", "pi"): 1, ("multiplicative", "saturated"): 2}.get((model, mech))

    def to_dict(self):
        return copy.deepcopy(self.data)

    def to_json(self):
        return json.dumps(self.data, indent=2)


def _line_of(text, path):
    """Best-effort line number of the JSON node at ``path``."""
    if text is None:
        return None
    lines = text.splitlines()
    start = 0
    found = None
    for key in path:
        if not isinstance(key, str):
            continue
        needle = f'"{key}"'
        for i in range(start, len(lines)):
            if needle in lines[i]:
                found = start = i
                break
    return None if found is None else found + 1


def _materialize(raw):
    d = copy.deepcopy(raw)
    logit = d.setdefault("logit", {})
    logit.setdefault("eta", 1.0)
    logit.setdefault("beta", 1.0)
    model = d["model"]
    if model["kind"] != "unbiased":
        model.setdefault("family", "affine")
        if model["family"] == "tabulated":
            if "csv" not in model:
                raise ConfigError("tabulated model needs a 'csv' entry")
        else:
            for key, val in _MODEL_DEFAULTS[model["kind"], model["family"]].items():
                model.setdefault(key, val)
    mech = d.setdefault("mechanism", {"kind": "none"})
    if mech["kind"] != "none":
        mech.setdefault("rho", 1.0)
        mech.setdefault("kappa", 1.0)
        if mech["kind"] == "saturated":
            mech.setdefault("alpha", 1.0)
            mech.setdefault("t_bar", 1.0)
    d.setdefault("cost", None)
    for key in ("pi0", "seed", "pi_star", "mu0", "sweep"):
        d.setdefault(key, None)
    d.setdefault("horizon", 50.0)
    if d.get("step") is None:
        d["step"] = 1e-3 / logit["eta"]
    if d.get("record_interval") is None:
        d["record_interval"] = d["step"]
    d.setdefault("certificates", "auto")
    conv = d.setdefault("convergence", {})
    conv.setdefault("epsilon", 1e-4)
    conv.setdefault("window", 10.0)
    d.setdefault("output_dir", "out")
    return d


def _build_bias(model, n, base_dir):
    kind = model["kind"]
    if kind == "unbiased":
        return None
    cls = AdditiveBias if kind == "additive" else MultiplicativeBias
    if model["family"] == "tabulated":
        paths = model["csv"]
        paths = [paths] * n if isinstance(paths, str) else paths
        if len(paths) != n:
            raise ConfigError(f"model.csv lists {len(paths)} files for {n} strategies")
        return cls([TabulatedCurve.from_csv(base_dir / p) for p in paths])
    for key in ("intercept", "slope", "bend"):
        val = model.get(key)
        if isinstance(val, list) and len(val) != n:
            raise ConfigError(f"model.{key} has {len(val)} entries, expected {n}")
    bend = model["bend"] if model["family"] == "smoothstep" else None
    return cls(_make_curves(n, model["intercept"], model["slope"], bend))


def _build_mechanism(mech):
    if mech["kind"] == "pi":
        return PIMechanism(mech["rho"], mech["kappa"])
    if mech["kind"] == "saturated":
        return SaturatedPIMechanism(mech["rho"], mech["kappa"], mech["alpha"], mech["t_bar"])
    return None


def _build_cost(cost):
    if cost is None:
        return None
    if cost["kind"] == "constant":
        return ConstantCost(cost["values"])
    return SinusoidalCost(cost["offset"], cost["amplitude"], cost["frequency"], cost["phase"])


def parse_config(raw, base_dir=".", text=None, source=None) -> ExperimentConfig:
    """Validate a config mapping and build its scenario.

    Raises :class:`ConfigError` for schema violations and for values the
    scenario rejects (for example a boundary initial state).
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
            path = path + extra[:1]
        loc = "/".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{loc}: {err.message}", _line_of(text, path), source)
    try:
        data = _materialize(raw)
        n = data["n"]
        base_dir = Path(base_dir)
        params = LogitParams(data["logit"]["eta"], data["logit"]["beta"], n)
        for key in ("pi0", "pi_star", "mu0"):
            if data[key] is not None and len(data[key]) != n:
                raise ConfigError(f"{key} has {len(data[key])} entries, expected {n}",
                                  _line_of(text, [key]), source)
        scenario = Scenario(
            params=params,
            pi0=data["pi0"],
            bias=_build_bias(data["model"], n, base_dir),
            mechanism=_build_mechanism(data["mechanism"]),
            pi_star=data["pi_star"],
            mu0=data["mu0"],
            cost=_build_cost(data["cost"]),
            horizon=data["horizon"],
            step=data["step"],
            record_interval=data["record_interval"],
            seed=data["seed"],
        )
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        key = _guess_key(str(exc))
        raise ConfigError(str(exc), _line_of(text, [key]) if key else None, source) from exc
    if data["sweep"] is not None and scenario.mechanism is None:
        raise ConfigError("sweep needs a mechanism", _line_of(text, ["sweep"]), source)
    return ExperimentConfig(data, scenario, base_dir)


def _guess_key(message):
    for key in ("pi_star", "pi0", "mu0", "alpha", "kappa", "record_interval", "horizon",
                "step", "cost", "model"):
        if key in message:
            return key
    return None


def load_config(path) -> ExperimentConfig:
    """Read, validate and materialise a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno, str(path)) from exc
    return parse_config(raw, path.parent, text, str(path))
