"""Weight manifest: the on-disk model format.

A model directory holds two files:

    model.json    architecture block plus one descriptor per tensor
                  (name, shape, float scale, LIF threshold, byte offset)
    weights.bin   all tensors concatenated as signed 8-bit integers,
                  row-major, little-endian byte order

Tensors are named "block{i}.w_q" ... "block{i}.w_2" for every block plus
an optional "head.w" classifier. Integer weights must lie in [-15, 15]
(one signed conductance-level range); the scale field records the float
step the integers were quantized with so exporters can round-trip, but
inference itself runs on the integers. Writing is canonical (sorted
keys, fixed indentation, tensors in block order), so identical weights
always produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from jsonschema import ValidationError, validate

from .model import LayerWeights, ModelConfig

__all__ = [
    "ManifestError",
    "TensorSpec",
    "ManifestBundle",
    "MANIFEST_SCHEMA",
    "save_manifest",
    "load_manifest",
]

WEIGHT_LIMIT = 15
FORMAT_NAME = "xpikesim-manifest"

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "model", "tensors", "weights_file"],
    "properties": {
        "format": {"const": FORMAT_NAME},
        "version": {"type": "integer", "minimum": 1},
        "model": {
            "type": "object",
            "required": ["arch", "depth", "d_model", "heads", "n_tokens",
                         "t_steps"],
            "properties": {
                "arch": {"enum": ["encoder", "decoder"]},
                "depth": {"type": "integer", "minimum": 1},
                "d_model": {"type": "integer", "minimum": 1},
                "heads": {"type": "integer", "minimum": 1},
                "n_tokens": {"type": "integer", "minimum": 2},
                "t_steps": {"type": "integer", "minimum": 1},
                "ffn_dim": {"type": "integer", "minimum": 0},
                "residual_mode": {"enum": ["membrane_add", "spike_or"]},
            },
        },
        "tensors": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "shape", "scale", "threshold", "offset"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "shape": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 1},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "scale": {"type": "number", "exclusiveMinimum": 0},
                    "threshold": {"type": "integer", "minimum": 1},
                    "offset": {"type": "integer", "minimum": 0},
                },
            },
        },
        "weights_file": {"type": "string", "minLength": 1},
    },
}


class ManifestError(ValueError):
    """The manifest files are missing, unparseable, or inconsistent."""


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple
    scale: float
    threshold: int
    offset: int


@dataclass
class ManifestBundle:
    """A loaded model: config, per-block weights, optional classifier."""

    config: ModelConfig
    layers: list
    head: "tuple[np.ndarray, int] | None" = None
    scales: dict = field(default_factory=dict)


def _tensor_order(depth: int, with_head: bool) -> list:
    names = [f"block{b}.{fld}" for b in range(depth)
             for fld in LayerWeights._FIELDS]
    if with_head:
        names.append("head.w")
    return names


def save_manifest(out_dir: str, config: ModelConfig, layers: list,
                  head: "tuple[np.ndarray, int] | None" = None,
                  scales: "dict | None" = None) -> None:
    """Write model.json + weights.bin into out_dir (created if needed).

    `scales` optionally maps tensor names to the float quantization step
    that produced the integers (default 1.0).
    """
    if len(layers) != config.depth:
        raise ManifestError(f"got {len(layers)} layer weight sets for "
                            f"depth {config.depth}")
    scales = dict(scales or {})
    os.makedirs(out_dir, exist_ok=True)

    tensors = []
    blob = bytearray()
    for b, lw in enumerate(layers):
        for fld in LayerWeights._FIELDS:
            _append_tensor(tensors, blob, f"block{b}.{fld}",
                           getattr(lw, fld), lw.threshold(fld), scales)
    if head is not None:
        w_head, thr_head = head
        _append_tensor(tensors, blob, "head.w", w_head, thr_head, scales)

    payload = {
        "format": FORMAT_NAME,
        "version": 1,
        "model": {
            "arch": config.arch,
            "depth": config.depth,
            "d_model": config.d_model,
            "heads": config.heads,
            "n_tokens": config.n_tokens,
            "t_steps": config.t_steps,
            "ffn_dim": config.ffn_dim,
            "residual_mode": config.residual_mode,
        },
        "tensors": tensors,
        "weights_file": "weights.bin",
    }
    with open(os.path.join(out_dir, "weights.bin"), "wb") as fh:
        fh.write(bytes(blob))
    with open(os.path.join(out_dir, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _append_tensor(tensors: list, blob: bytearray, name: str,
                   matrix: np.ndarray, threshold: int, scales: dict) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ManifestError(f"tensor {name} must be 2-D, got {matrix.shape}")
    if np.abs(matrix).max(initial=0) > WEIGHT_LIMIT:
        raise ManifestError(f"tensor {name} exceeds the integer range "
                            f"[-{WEIGHT_LIMIT}, {WEIGHT_LIMIT}]")
    tensors.append({
        "name": name,
        "shape": [int(matrix.shape[0]), int(matrix.shape[1])],
        "scale": float(scales.get(name, 1.0)),
        "threshold": int(threshold),
        "offset": len(blob),
    })
    blob.extend(matrix.astype("<i1").tobytes(order="C"))


def load_manifest(model_dir: str) -> ManifestBundle:
    """Parse, validate, and materialize a model directory."""
    path = os.path.join(model_dir, "model.json")
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc

    try:
        validate(payload, MANIFEST_SCHEMA)
    except ValidationError as exc:
        raise ManifestError(f"manifest schema violation: {exc.message}") from exc

    try:
        config = ModelConfig(**payload["model"])
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"bad model config block: {exc}") from exc

    blob_path = os.path.join(model_dir, payload["weights_file"])
    try:
        with open(blob_path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read weight blob: {exc}") from exc

    specs = {}
    for raw in payload["tensors"]:
        spec = TensorSpec(name=raw["name"], shape=tuple(raw["shape"]),
                          scale=float(raw["scale"]),
                          threshold=int(raw["threshold"]),
                          offset=int(raw["offset"]))
        if spec.name in specs:
            raise ManifestError(f"duplicate tensor {spec.name}")
        specs[spec.name] = spec

    expected = _tensor_order(config.depth, with_head="head.w" in specs)
    missing = [n for n in expected if n not in specs]
    extra = [n for n in specs if n not in expected]
    if missing:
        raise ManifestError(f"manifest is missing tensors: {missing}")
    if extra:
        raise ManifestError(f"manifest has unexpected tensors: {extra}")

    tensors = {name: _read_tensor(blob, specs[name]) for name in expected}

    layers = []
    for b in range(config.depth):
        fields = {fld: tensors[f"block{b}.{fld}"]
                  for fld in LayerWeights._FIELDS}
        thresholds = {fld: specs[f"block{b}.{fld}"].threshold
                      for fld in LayerWeights._FIELDS}
        lw = LayerWeights(**fields, thresholds=thresholds)
        try:
            lw.validate(config)
        except ValueError as exc:
            raise ManifestError(f"block {b} weights inconsistent with "
                                f"config: {exc}") from exc
        layers.append(lw)

    head = None
    if "head.w" in specs:
        w_head = tensors["head.w"]
        if w_head.shape[1] != config.d_model:
            raise ManifestError(f"head.w input dim {w_head.shape[1]} does not "
                                f"match d_model {config.d_model}")
        head = (w_head, specs["head.w"].threshold)

    scales = {name: spec.scale for name, spec in specs.items()}
    return ManifestBundle(config=config, layers=layers, head=head,
                          scales=scales)


def _read_tensor(blob: bytes, spec: TensorSpec) -> np.ndarray:
    size = spec.shape[0] * spec.shape[1]
    end = spec.offset + size
    if end > len(blob):
        raise ManifestError(f"tensor {spec.name} runs past the end of the "
                            f"weight blob ({end} > {len(blob)})")
    flat = np.frombuffer(blob, dtype="<i1", count=size, offset=spec.offset)
    matrix = flat.reshape(spec.shape).astype(np.int64)
    if np.abs(matrix).max(initial=0) > WEIGHT_LIMIT:
        raise ManifestError(f"tensor {spec.name} exceeds the integer range "
                            f"[-{WEIGHT_LIMIT}, {WEIGHT_LIMIT}]")
    return matrix
