"""Layer checkpoints as JSON text.

Parameters are written as ``%.17g`` decimal strings, which round-trip any
float64 exactly (and float32 values, widened, just as exactly). Keys are
sorted, so save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from spmix.dense import DenseLayer
from spmix.errors import DataError
from spmix.pairing import PairingSchedule
from spmix.spm import RectSpm, SpmLayer
from spmix.tensor import precision_tag, resolve_dtype

FORMAT = "spmix-checkpoint"
VERSION = 1


def _encode(a: np.ndarray) -> dict:
    flat = np.asarray(a, dtype=np.float64).reshape(-1)
    return {"shape": list(a.shape), "values": ["%.17g" % v for v in flat]}


def _decode(entry: dict, dtype) -> np.ndarray:
    vals = np.array([float(v) for v in entry["values"]], dtype=np.float64)
    return vals.reshape(entry["shape"]).astype(dtype)


def _all_arrays(layer) -> dict:
    # trainable or not, every array that affects the output is stored
    if layer.kind == "dense":
        return {"W": layer.W, "bias": layer.bias}
    out = {"d_in": layer.d_in, "d_out": layer.d_out, "bias": layer.bias, "blocks": layer.blocks}
    if layer.residual is not None:
        out["residual"] = layer.residual
    return out


def to_dict(layer, seeds: dict | None = None) -> dict:
    doc = {"format": FORMAT, "version": VERSION, "seeds": dict(seeds or {})}
    if isinstance(layer, RectSpm):
        doc["rect"] = {"n_in": layer.n_in, "n_out": layer.n_out}
        layer = layer.inner
    doc.update(kind=layer.kind, precision=precision_tag(layer.dtype),
               trainable_bias=bool(layer.trainable_bias),
               params={k: _encode(v) for k, v in _all_arrays(layer).items()})
    if layer.kind == "spm":
        doc["variant"] = layer.variant
        doc["schedule"] = layer.schedule.to_dict()
    return doc


def from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise DataError("not a spmix checkpoint")
    if doc.get("version") != VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        dtype = resolve_dtype(doc["precision"])
        params = {k: _decode(v, dtype) for k, v in doc["params"].items()}
        if doc["kind"] == "dense":
            return DenseLayer(params["W"], params["bias"], dtype, doc["trainable_bias"])
        if doc["kind"] != "spm":
            raise DataError(f"unknown layer kind {doc['kind']!r}")
        layer = SpmLayer(PairingSchedule.from_dict(doc["schedule"]), doc["variant"], dtype,
                         doc["trainable_bias"])
        for name in ("d_in", "d_out", "bias", "blocks", "residual"):
            cur = getattr(layer, name)
            if cur is None:
                continue
            new = params[name]
            if new.shape != cur.shape:
                raise DataError(f"parameter {name} has shape {new.shape}, expected {cur.shape}")
            cur[...] = new
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed checkpoint: {exc!r}") from exc
    if "rect" in doc:
        return RectSpm(doc["rect"]["n_in"], doc["rect"]["n_out"], layer)
    return layer


def dumps(layer, seeds: dict | None = None) -> str:
    return json.dumps(to_dict(layer, seeds), sort_keys=True, indent=1) + "\n"


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint is not valid JSON: {exc}") from exc
    return from_dict(doc)


def save(layer, path, seeds: dict | None = None) -> None:
    try:
        Path(path).write_text(dumps(layer, seeds), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def seeds_of(text: str) -> dict:
    return json.loads(text).get("seeds", {})
