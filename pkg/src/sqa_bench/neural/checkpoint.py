"""Binary checkpoint: magic, version, JSON header, then little-endian float64 blocks."""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import CheckpointFormatError
from .model import Featurizer, ModelConfig, SpanModel

MAGIC = b"SQACKPT\0"
VERSION = 1


def save_checkpoint(path, model: SpanModel, extra=None):
    params = model.parameters()
    blocks, offset = [], 0
    for name, p in params.items():
        n = int(p.data.size)
        blocks.append({"name": name, "shape": list(p.data.shape), "offset": offset, "count": n})
        offset += n
    header = {
        "config": model.config.to_dict(),
        "vocab": model.featurizer.to_dict(),
        "inventory": list(model.featurizer.lexicon.inventory.phonemes)
        if model.featurizer.lexicon is not None else None,
        "params": blocks,
        "extra": extra or {},
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(raw)))
        fh.write(raw)
        for p in params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Header dict and ``{name: array}`` without building a model."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    try:
        version, hlen = struct.unpack_from("<II", blob, pos)
    except struct.error as exc:
        raise CheckpointFormatError(f"{path}: truncated header") from exc
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    pos += 8
    try:
        header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt header") from exc
    payload = np.frombuffer(blob, dtype="<f8", offset=pos + hlen)
    arrays = {}
    for b in header["params"]:
        end = b["offset"] + b["count"]
        if end > payload.size:
            raise CheckpointFormatError(f"{path}: payload too short for {b['name']}")
        arrays[b["name"]] = payload[b["offset"]:end].reshape(b["shape"]).astype(np.float64)
    return header, arrays


def load_checkpoint(path, lexicon=None, patterns=None):
    header, arrays = read_checkpoint(path)
    vocab = header["vocab"]
    featurizer = Featurizer(vocab["words"], vocab["syllables"], lexicon, patterns)
    model = SpanModel(ModelConfig.from_dict(header["config"]), featurizer)
    params = model.parameters()
    if set(params) != set(arrays):
        raise CheckpointFormatError(f"{path}: parameter names do not match the config")
    for name, p in params.items():
        if p.data.shape != arrays[name].shape:
            raise CheckpointFormatError(f"{path}: shape mismatch for {name}")
        p.data[...] = arrays[name]
    return model, header
