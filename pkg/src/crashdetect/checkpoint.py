"""Versioned JSON checkpoint for trained models.

Field order is fixed and floats are written with their shortest exact
representation, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .dataio import N_FEATURES, ScalerParams, atomic_write_text
from .numerics import Activation
from .recurrent import GATE_NAMES, CellKind, GateParams, NetworkParams, NetworkSpec, make_cell
from .training import TrainedModel

FORMAT_NAME = "crashdetect-checkpoint"
FORMAT_VERSION = 1

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_gate = {
    "type": "object",
    "required": ["input_weights", "recurrent_weights", "bias"],
    "additionalProperties": False,
    "properties": {"input_weights": _matrix, "recurrent_weights": _matrix, "bias": _vector},
}

SCHEMA = {
    "type": "object",
    "required": ["format", "version", "spec", "layers", "head", "scaler", "threshold", "metadata"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": FORMAT_NAME},
        "version": {"type": "integer"},
        "spec": {
            "type": "object",
            "required": ["cell_kind", "layer_widths", "input_dim", "activation"],
            "additionalProperties": False,
            "properties": {
                "cell_kind": {"enum": [k.value for k in CellKind]},
                "layer_widths": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "input_dim": {"type": "integer", "minimum": 1},
                "activation": {"enum": [a.value for a in Activation]},
            },
        },
        "layers": {"type": "array", "minItems": 1, "items": {"type": "object", "additionalProperties": _gate}},
        "head": {
            "type": "object",
            "required": ["weights", "bias"],
            "additionalProperties": False,
            "properties": {"weights": _vector, "bias": {"type": "number"}},
        },
        "scaler": {
            "type": "object",
            "required": ["minimum", "maximum"],
            "additionalProperties": False,
            "properties": {
                "minimum": {**_vector, "minItems": N_FEATURES, "maxItems": N_FEATURES},
                "maximum": {**_vector, "minItems": N_FEATURES, "maxItems": N_FEATURES},
            },
        },
        "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "metadata": {
            "type": "object",
            "required": ["seed", "epochs_run", "final_loss", "training_log"],
            "properties": {
                "seed": {"type": "integer"},
                "epochs_run": {"type": "integer", "minimum": 0},
                "final_loss": {"type": ["number", "null"]},
                "training_log": _vector,
                "data_rows": {"type": "integer", "minimum": 0},
            },
        },
    },
}


class CheckpointError(ValueError):
    pass


def to_document(model: TrainedModel, extra_metadata: dict | None = None) -> dict:
    spec = model.spec
    layers = []
    for cell in model.params.layers:
        layers.append({
            name: {
                "input_weights": g.input_weights.tolist(),
                "recurrent_weights": g.recurrent_weights.tolist(),
                "bias": g.bias.tolist(),
            }
            for name, g in zip(GATE_NAMES[spec.cell_kind], cell.gates())
        })
    log = [float(v) for v in model.training_log]
    metadata = {
        "seed": int(model.seed),
        "epochs_run": len(log),
        "final_loss": log[-1] if log else None,
        "training_log": log,
    }
    metadata.update(extra_metadata or {})
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spec": {
            "cell_kind": spec.cell_kind.value,
            "layer_widths": list(spec.layer_widths),
            "input_dim": spec.input_dim,
            "activation": spec.activation.value,
        },
        "layers": layers,
        "head": {"weights": model.params.head_weights[0].tolist(), "bias": float(model.params.head_bias)},
        "scaler": {"minimum": model.scaler.minimum.tolist(), "maximum": model.scaler.maximum.tolist()},
        "threshold": float(model.threshold),
        "metadata": metadata,
    }


def dumps(model: TrainedModel, extra_metadata: dict | None = None) -> str:
    return json.dumps(to_document(model, extra_metadata), indent=1, allow_nan=False) + "\n"


def from_document(doc: dict) -> tuple[TrainedModel, dict]:
    if isinstance(doc, dict) and doc.get("format") == FORMAT_NAME and doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {doc.get('version')!r}; this build reads version {FORMAT_VERSION}"
        )
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CheckpointError(f"checkpoint invalid at {where}: {exc.message}") from None

    s = doc["spec"]
    spec = NetworkSpec(s["cell_kind"], tuple(s["layer_widths"]), s["input_dim"], s["activation"])
    names = GATE_NAMES[spec.cell_kind]
    try:
        cells = []
        for i, layer in enumerate(doc["layers"]):
            if list(layer) != list(names):
                raise CheckpointError(f"layer {i}: expected gates {list(names)}, found {list(layer)}")
            gates = [
                GateParams(
                    np.array(layer[n]["input_weights"], dtype=np.float64),
                    np.array(layer[n]["recurrent_weights"], dtype=np.float64),
                    np.array(layer[n]["bias"], dtype=np.float64),
                )
                for n in names
            ]
            cells.append(make_cell(spec, gates))
        params = NetworkParams(tuple(cells), np.array([doc["head"]["weights"]], dtype=np.float64),
                               float(doc["head"]["bias"]))
        scaler = ScalerParams(np.array(doc["scaler"]["minimum"]), np.array(doc["scaler"]["maximum"]))
        meta = doc["metadata"]
        model = TrainedModel(spec, params, scaler, float(doc["threshold"]),
                             tuple(float(v) for v in meta["training_log"]), int(meta["seed"]))
    except CheckpointError:
        raise
    except ValueError as exc:
        raise CheckpointError(f"checkpoint inconsistent: {exc}") from None
    extra = {k: v for k, v in meta.items() if k not in ("seed", "epochs_run", "final_loss", "training_log")}
    return model, extra


def save_checkpoint(model: TrainedModel, path, extra_metadata: dict | None = None) -> None:
    atomic_write_text(path, dumps(model, extra_metadata))


def load_checkpoint(path) -> tuple[TrainedModel, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}") from None
    return from_document(doc)
