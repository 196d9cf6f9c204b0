"""JSON run configuration: schema validation and conversion to FlowConfig."""
from __future__ import annotations

import json

import jsonschema

from .assembly import TangentialForm
from .mesh.generators import GENERATORS
from .schemes import FlowConfig, SchemeKind

CONFIG_VERSION = 1

_positive = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "scheme", "mesh", "time"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": [k.value for k in SchemeKind]},
                "tangential_form": {"enum": [f.value for f in TangentialForm]},
            },
        },
        "mesh": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["generator"],
                    "properties": {
                        "generator": {"enum": sorted(GENERATORS)},
                        "parameters": {"type": "object"},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["file"],
                    "properties": {"file": {"type": "string", "minLength": 1}},
                },
            ]
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "required": ["tau", "t_end"],
            "properties": {"tau": _positive, "t_end": {"type": "number", "minimum": 0}},
        },
        "dewetting": {
            "type": "object",
            "additionalProperties": False,
            "required": ["theta_degrees"],
            "properties": {
                "theta_degrees": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180}
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["DirectLU", "GMRES"]},
                "tol": _positive,
                "reuse_factorization": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string", "minLength": 1},
                "csv_name": {"type": "string", "pattern": r"^[^/\\]+$"},
                "snapshot_every": {"type": "integer", "minimum": 0},
                "snapshot_format": {"enum": ["vtk", "off", "obj"]},
            },
        },
        "pinch_off": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "neck_axis": {"enum": ["x", "y", "z"]},
                "neck_threshold": _positive,
            },
        },
        "deterministic": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


def validate(document):
    """Raise ConfigError unless ``document`` satisfies the schema and cross-field rules."""
    try:
        jsonschema.validate(document, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    kind = SchemeKind(document["scheme"]["kind"])
    if kind.is_dewetting and "dewetting" not in document:
        raise ConfigError(f"scheme {kind.value} needs a 'dewetting' section")
    form = document["scheme"].get("tangential_form")
    if form is not None and not kind.uses_tangential_form and form != TangentialForm.FULL_GRADIENT.value:
        raise ConfigError(f"tangential_form has no effect for {kind.value}")


def from_document(document, *, threads=1):
    validate(document)
    sch = document["scheme"]
    out = document.get("output", {})
    sol = document.get("solver", {})
    pinch = document.get("pinch_off", {})
    try:
        return FlowConfig(
            scheme=sch["kind"],
            tangential_form=sch.get("tangential_form", TangentialForm.FULL_GRADIENT.value),
            mesh=dict(document["mesh"]),
            tau=float(document["time"]["tau"]),
            t_end=float(document["time"]["t_end"]),
            theta_degrees=document.get("dewetting", {}).get("theta_degrees"),
            solver_method=sol.get("method", "DirectLU"),
            solver_tol=float(sol.get("tol", 1e-10)),
            reuse_factorization=bool(sol.get("reuse_factorization", False)),
            output_dir=out.get("dir"),
            csv_name=out.get("csv_name", "diagnostics.csv"),
            snapshot_every=int(out.get("snapshot_every", 0)),
            snapshot_format=out.get("snapshot_format", "vtk"),
            deterministic=bool(document.get("deterministic", True)),
            threads=threads,
            neck_axis=pinch.get("neck_axis"),
            neck_threshold=pinch.get("neck_threshold"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, *, threads=1):
    """Read, validate and convert a JSON config file.

    Raises OSError when the file cannot be read and ConfigError on invalid content.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return from_document(document, threads=threads)
