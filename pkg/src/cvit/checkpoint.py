"""Checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"CVITCKPT"
    4 bytes   uint32 format version (1)
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header (sorted keys):
                model_config  ModelConfig fields
                norm_stats    NormStats.to_dict()
                extra         free-form metadata (run config, training summary)
                tensors       [{name, shape, offset, count}] in payload order
    payload   float64 little-endian, row-major, tensors back to back;
              offset/count are in elements from the payload start

No timestamps are written, so identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from cvit.grid import NormStats
from cvit.model import CvitModel, ModelConfig

MAGIC = b"CVITCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, model: CvitModel, stats: NormStats, extra: dict | None = None) -> None:
    entries, chunks, offset = [], [], 0
    for name, t in model.params.items():
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = {
        "model_config": model.config.to_dict(),
        "norm_stats": stats.to_dict(),
        "extra": extra or {},
        "tensors": entries,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for c in chunks:
            fh.write(c)


def load_checkpoint(path: str | Path) -> tuple[CvitModel, NormStats, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(raw[start : start + hlen])
    payload = np.frombuffer(raw, dtype="<f8", offset=start + hlen)
    model = CvitModel(ModelConfig(**header["model_config"]))
    state = {
        e["name"]: payload[e["offset"] : e["offset"] + e["count"]].reshape(e["shape"]).astype(np.float64)
        for e in header["tensors"]
    }
    model.load_state_dict(state)
    return model, NormStats.from_dict(header["norm_stats"]), header["extra"]
