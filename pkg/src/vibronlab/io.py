"""Configuration ingestion, dataset emission and run manifests.

Config documents are JSON. Every key ending in ``_hz`` holds an ordinary
frequency f = w / 2pi and is converted to an angular frequency under the
same key without the suffix. Unknown keys are rejected.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
ENV_PREFIX = "VIBRONLAB_"


class ConfigError(ValueError):
    pass


class DatasetError(ValueError):
    pass


# -- schema -------------------------------------------------------------------

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT0 = {"type": "integer", "minimum": 0}


def _obj(props, required=None):
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": props,
        "required": list(props) if required is None else required,
    }


_TRAP = {
    "oneOf": [
        _obj({"kind": {"const": "paul_trap"}, "axial_freq_hz": _POS}),
        _obj({"kind": {"const": "uniform_lattice"}, "spacing_m": _POS}),
    ]
}
_CHAIN = _obj({
    "isotopes": {"type": "array", "minItems": 2, "items": {"enum": ["Mg24", "Mg25", "Be9"]}},
    "roles": {"type": "array", "minItems": 2, "items": {"enum": ["sigma", "tau", "kappa"]}},
    "transverse_freq_hz": _POS,
    "trap": _TRAP,
})
_COOL = _obj({"site": _INT0, "detuning_gamma": {"type": "number"}, "rabi_gamma": _NONNEG})
_RES = _obj({"left": _COOL, "right": _COOL})
_GEN = {"enum": ["edge", "bulk"]}
_NUMS = {"type": "array", "minItems": 1, "items": {"type": "number"}}
_POSNUMS = {"type": "array", "minItems": 1, "items": _POS}

PARAM_SCHEMAS = {
    "tqw_ballistic": _obj({"chain": _CHAIN, "reservoirs": _RES, "generator": _GEN}),
    "tqw_dephasing": _obj({
        "chain": _CHAIN, "reservoirs": _RES, "generator": _GEN,
        "gamma_d_over_gamma": _POS, "xi_c_over_spacing": _POSNUMS,
    }),
    "tqw_disorder": _obj({
        "chain": _CHAIN, "reservoirs": _RES, "generator": _GEN,
        "dw_minus_over_gamma": _POS,
        "mode": {"enum": ["exhaustive", "monte_carlo"]},
        "n_samples": {"type": "integer", "minimum": 1},
        "sites": {"oneOf": [{"const": "bulk"}, {"type": "array", "items": _INT0, "minItems": 1}]},
    }),
    "tqd": _obj({"chain": _CHAIN, "reservoirs": _RES, "probe_site": _INT0}),
    "dtqd_sweep": _obj({"chain": _CHAIN, "reservoirs": _RES, "probe_site": _INT0, "right_rabi_gamma": _POSNUMS}),
    "leads_step": _obj({"chain": _CHAIN, "reservoirs": _RES, "dot_site": _INT0, "dw_minus_over_J": _NONNEG,
                        "generator": _GEN}),
    "switch": _obj({
        "chain": _CHAIN, "dot_site": _INT0, "dw_minus_over_J": _POS,
        "zeta": {"oneOf": [{"const": "first_peak"}, _NONNEG]},
        "r": {"type": "number"}, "window_transfer_times": _POS, "n_points": {"type": "integer", "minimum": 2},
        "pulse_fractions": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
    }),
    "ramsey_number": _obj({
        "chain": _CHAIN, "reservoirs": _RES, "probe_site": _INT0, "lambda_over_g": _POSNUMS,
        "windows_s": _POSNUMS, "n_points": {"type": "integer", "minimum": 8},
        "n_max": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
    }),
    "ramsey_current": _obj({
        "chain": _CHAIN, "dot_site": _INT0, "dw_minus_over_J": _POS, "zeta2": _NONNEG,
        "window_transfer_times": _POS, "n_points": {"type": "integer", "minimum": 2},
        "dot_spin": {"enum": ["up", "down", "plus"]},
    }),
    "fano_sweep": _obj({
        "chain": _CHAIN, "reservoirs": _RES, "dot_site": _INT0, "nbar_left": _POSNUMS,
        "nbar_right": {"oneOf": [_NONNEG, {"type": "null"}]},
        "method": {"enum": ["gaussian", "fock"]},
        "n_max": {"oneOf": [{"type": "array", "items": {"type": "integer", "minimum": 1}}, {"type": "null"}]},
    }),
}

SCENARIOS = tuple(PARAM_SCHEMAS)

DOCUMENT_SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "scenario": {"enum": list(SCENARIOS)},
    "params": {"type": "object"},
})


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate(tree: dict) -> None:
    """Raise ConfigError naming the offending key path."""
    v = jsonschema.Draft202012Validator(DOCUMENT_SCHEMA)
    errs = sorted(v.iter_errors(tree), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        raise ConfigError(f"schema error at {_path(e)}: {e.message}")
    pv = jsonschema.Draft202012Validator(PARAM_SCHEMAS[tree["scenario"]])
    errs = sorted(pv.iter_errors(tree["params"]), key=lambda e: list(e.absolute_path))
    if errs:
        e = _deepest(errs[0])
        raise ConfigError(f"schema error at params.{_path(e)}: {e.message}")
    chain = tree["params"]["chain"]
    if len(chain["isotopes"]) != len(chain["roles"]):
        raise ConfigError("schema error at params.chain.roles: length differs from params.chain.isotopes")


def _deepest(err):
    # oneOf failures carry the informative message in their context
    while err.context:
        err = max(err.context, key=lambda e: len(list(e.absolute_path)))
    return err


# -- parsing ------------------------------------------------------------------

def parse_text(text: str, source: str = "<string>") -> dict:
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error in {source} at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"parse error in {source}: top level must be an object")
    return tree


def load_config(path, overrides=(), validate_tree: bool = True) -> dict:
    """Read, override and validate a config; returns the raw (Hz) tree."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    tree = parse_text(text, str(p))
    tree = apply_overrides(tree, overrides)
    if validate_tree:
        validate(tree)
    return tree


def preset_names() -> list:
    return sorted(f.name[:-5] for f in resources.files("vibronlab.presets").iterdir() if f.name.endswith(".json"))


def preset_path(name: str):
    base = os.environ.get(ENV_PREFIX + "PRESET_DIR")
    if base:
        cand = Path(base) / f"{name}.json"
        if cand.exists():
            return cand
    f = resources.files("vibronlab.presets") / f"{name}.json"
    if not f.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return f


def load_preset(name: str, overrides=()) -> dict:
    with resources.as_file(preset_path(name)) as p:
        return load_config(p, overrides)


def apply_overrides(tree: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings; values are parsed as JSON when possible."""
    tree = json.loads(json.dumps(tree))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = tree
        parts = key.strip().split(".")
        for k in parts[:-1]:
            if isinstance(node, list):
                node = node[int(k)]
            else:
                node = node.setdefault(k, {})
        if isinstance(node, list):
            node[int(parts[-1])] = value
        else:
            node[parts[-1]] = value
    return tree


def env_overrides(environ=None) -> dict:
    """Settings taken from VIBRONLAB_* variables (seed, threads, out, set)."""
    env = os.environ if environ is None else environ
    out = {}
    if ENV_PREFIX + "SEED" in env:
        out["seed"] = int(env[ENV_PREFIX + "SEED"])
    if ENV_PREFIX + "THREADS" in env:
        out["threads"] = int(env[ENV_PREFIX + "THREADS"])
    if ENV_PREFIX + "OUT" in env:
        out["out"] = env[ENV_PREFIX + "OUT"]
    if ENV_PREFIX + "SET" in env:
        out["set"] = [s for s in env[ENV_PREFIX + "SET"].split(";") if s.strip()]
    return out


def to_internal(tree):
    """Copy of the tree with every ``*_hz`` key converted to rad/s."""
    if isinstance(tree, dict):
        out = {}
        for k, v in tree.items():
            if k.endswith("_hz"):
                out[k[:-3]] = _scale(v)
            else:
                out[k] = to_internal(v)
        return out
    if isinstance(tree, list):
        return [to_internal(v) for v in tree]
    return tree


def _scale(v):
    if isinstance(v, list):
        return [_scale(x) for x in v]
    if v is None:
        return None
    return 2.0 * math.pi * float(v)


# -- datasets -----------------------------------------------------------------

@dataclass
class Table:
    """Named columns of equal length (floats, ints or strings)."""

    columns: dict

    def __post_init__(self):
        cols = {}
        n = None
        for k, v in self.columns.items():
            arr = list(np.asarray(v).tolist()) if isinstance(v, np.ndarray) else list(v)
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise DatasetError(f"column {k!r} has {len(arr)} rows, expected {n}")
            cols[str(k)] = arr
        self.columns = cols

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def rows(self):
        keys = list(self.columns)
        for i in range(self.n_rows):
            yield [self.columns[k][i] for k in keys]


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise DatasetError("non-finite value in dataset")
        s = format(v, ".17g")
        # keep floats recognisable as floats (and -0.0 signed) on re-read
        return s if any(c in s for c in ".e") else s + ".0"
    if isinstance(v, complex):
        raise DatasetError("complex value in dataset; split it into real columns")
    return str(v)


def _check_finite(table: Table):
    for k, col in table.columns.items():
        for v in col:
            if isinstance(v, complex):
                raise DatasetError(f"complex value in column {k!r}")
            if isinstance(v, float) and not math.isfinite(v):
                raise DatasetError(f"NaN or infinite value in column {k!r}")


def emit_dataset(table: Table, fmt: str, path) -> Path:
    """Write ``table`` as CSV (RFC 4180, 17 significant digits) or JSON."""
    if not isinstance(table, Table):
        table = Table(table)
    _check_finite(table)
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with p.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\r\n")
                w.writerow(list(table.columns))
                for row in table.rows():
                    w.writerow([_cell(v) for v in row])
        elif fmt == "json":
            data = {"columns": list(table.columns), "data": {k: _jsonable(v) for k, v in table.columns.items()}}
            p.write_text(json.dumps(data, allow_nan=False, indent=1), encoding="utf-8")
        else:
            raise DatasetError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise DatasetError(f"cannot write {p}: {exc.strerror}") from None
    return p


def read_csv(path) -> Table:
    """Read a CSV written by emit_dataset; numeric cells become floats or ints."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: [] for h in header}
    for r in body:
        for h, v in zip(header, r):
            cols[h].append(_parse_cell(v))
    return Table(cols)


def read_json_dataset(path) -> Table:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return Table({k: data["data"][k] for k in data["columns"]})


def _parse_cell(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    if v in ("true", "false"):
        return v == "true"
    return v


def _jsonable(v):
    """Plain JSON types; rejects NaN."""
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise DatasetError("NaN or infinite value cannot be serialised")
        return v
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": _jsonable(v.real), "im": _jsonable(v.imag)}
    if v is None or isinstance(v, str):
        return v
    raise DatasetError(f"cannot serialise value of type {type(v).__name__}")


# -- manifest -----------------------------------------------------------------

@dataclass
class RunManifest:
    scenario: str
    inputs: dict
    derived: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        # normalise to plain JSON types so that loads(dumps(m)) == m
        for name in ("inputs", "derived", "seeds", "residuals", "timings", "outputs"):
            setattr(self, name, _jsonable(getattr(self, name)))

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False)

    @classmethod
    def loads(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        ver = data.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ConfigError(f"unsupported manifest schema_version {ver!r} (expected {SCHEMA_VERSION})")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown manifest keys: {sorted(extra)}")
        return cls(**data)

    def write(self, directory) -> Path:
        p = Path(directory) / MANIFEST_NAME
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.dumps(), encoding="utf-8")
        return p
