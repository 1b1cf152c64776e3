"""Versioned binary checkpoints for CNN models and RNN cells.

Layout::

    FERCKPT1\\n
    <one-line JSON header>\\n
    <payload: little-endian float32 tensors, back to back>

The header carries the format version, model kind, config, class order and a
tensor directory of ``name``, ``shape``, ``offset`` and ``nbytes`` (offsets
are relative to the payload start).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cnn import CnnConfig, CnnModel, expected_shapes
from .expressions import CLASS_NAMES
from .rnn import PARAM_NAMES, RnnCell
from .tensor import ActivationKind, BatchNormState

MAGIC = b"FERCKPT1"
VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def _cnn_tensors(model: CnnModel) -> dict[str, np.ndarray]:
    out = dict(model.params)
    for name, st in sorted(model.bn.items()):
        out[f"{name}.running_mean"] = st.mean
        out[f"{name}.running_var"] = st.var
    return out


def encode(obj) -> bytes:
    if isinstance(obj, CnnModel):
        kind, config, tensors = "cnn", obj.config.to_dict(), _cnn_tensors(obj)
    elif isinstance(obj, RnnCell):
        kind = "rnn"
        config = {"hidden_size": obj.hidden_size, "hidden_activation": obj.hidden_activation.value,
                  "output_activation": obj.output_activation.value}
        tensors = obj.params
    else:
        raise TypeError(f"cannot checkpoint {type(obj).__name__}")

    directory, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        directory.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"version": VERSION, "kind": kind, "config": config, "class_order": list(CLASS_NAMES),
              "dtype": "float32-le", "payload_bytes": offset, "tensors": directory}
    return MAGIC + b"\n" + json.dumps(header, sort_keys=True).encode() + b"\n" + b"".join(chunks)


def save_checkpoint(obj, path) -> None:
    Path(path).write_bytes(encode(obj))


def decode(data: bytes):
    if data[:len(MAGIC)] != MAGIC or data[len(MAGIC):len(MAGIC) + 1] != b"\n":
        raise BadMagicError(f"bad magic {data[:len(MAGIC)]!r}; expected {MAGIC!r}")
    start = len(MAGIC) + 1
    end = data.find(b"\n", start)
    if end < 0:
        raise TruncatedCheckpointError("checkpoint header is not terminated")
    try:
        header = json.loads(data[start:end])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}") from None
    if header.get("version") != VERSION:
        raise VersionMismatchError(f"checkpoint version {header.get('version')!r}, this build reads {VERSION}")
    if header.get("class_order") != list(CLASS_NAMES):
        raise CheckpointError(f"class order {header.get('class_order')} differs from {list(CLASS_NAMES)}")

    payload = data[end + 1:]
    expected = int(header["payload_bytes"])
    if len(payload) < expected:
        raise TruncatedCheckpointError(f"payload truncated: expected {expected} bytes, got {len(payload)}")
    if len(payload) > expected:
        raise ShapeMismatchError(f"payload has {len(payload) - expected} trailing bytes beyond {expected}")

    tensors, cursor = {}, 0
    for ent in header["tensors"]:
        shape = tuple(ent["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if ent["nbytes"] != nbytes or ent["offset"] != cursor:
            raise ShapeMismatchError(f"tensor {ent['name']}: shape {shape} inconsistent with "
                                     f"{ent['nbytes']} bytes at offset {ent['offset']}")
        chunk = payload[cursor:cursor + nbytes]
        tensors[ent["name"]] = np.frombuffer(chunk, dtype=_DTYPE).astype(np.float64).reshape(shape)
        cursor += nbytes
    if cursor != expected:
        raise ShapeMismatchError(f"tensor directory covers {cursor} bytes, payload declares {expected}")

    kind = header.get("kind")
    if kind == "cnn":
        return _restore_cnn(header["config"], tensors)
    if kind == "rnn":
        return _restore_rnn(header["config"], tensors)
    raise CheckpointError(f"unknown checkpoint kind {kind!r}")


def _restore_cnn(config: dict, tensors: dict) -> CnnModel:
    cfg = CnnConfig.from_dict(config)
    want = expected_shapes(cfg)
    params = {}
    for name, shape in want.items():
        if name not in tensors:
            raise ShapeMismatchError(f"checkpoint lacks tensor {name}")
        if tensors[name].shape != shape:
            raise ShapeMismatchError(f"tensor {name} has shape {tensors[name].shape}, config implies {shape}")
        params[name] = tensors[name]
    bn = {}
    for layer, width in (("bn1", want["bn1.gamma"][0]), ("bn2", want["bn2.gamma"][0])):
        mean, var = tensors.get(f"{layer}.running_mean"), tensors.get(f"{layer}.running_var")
        if mean is None or var is None or mean.shape != (width,) or var.shape != (width,):
            raise ShapeMismatchError(f"missing or misshapen running statistics for {layer}")
        bn[layer] = BatchNormState(mean, var)
    return CnnModel(cfg, params, bn)


def _restore_rnn(config: dict, tensors: dict) -> RnnCell:
    missing = [n for n in PARAM_NAMES if n not in tensors]
    if missing:
        raise ShapeMismatchError(f"checkpoint lacks tensors {missing}")
    try:
        cell = RnnCell(**{n: tensors[n] for n in PARAM_NAMES},
                       hidden_activation=ActivationKind(config["hidden_activation"]),
                       output_activation=ActivationKind(config["output_activation"]))
    except ValueError as e:
        raise ShapeMismatchError(str(e)) from None
    if cell.hidden_size != config.get("hidden_size"):
        raise ShapeMismatchError(f"hidden size {cell.hidden_size} != declared {config.get('hidden_size')}")
    return cell


def load_checkpoint(path):
    """Load a CnnModel or RnnCell; raises a CheckpointError subclass on corruption."""
    return decode(Path(path).read_bytes())
