"""Portable weights file with digest-gated loading.

Layout:
    magic "EDGR" | u32 format version | u32 header length | header JSON
    | raw little-endian tensor data | 32-byte sha256 of everything before it

The header carries the feature schema string, the model configuration, and a
tensor directory (name, shape, dtype, offset into the data section).  `load`
recomputes the digest and refuses corrupt or truncated files, which is what
drives the re-download path in the update protocol.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .features import FeatureConfig
from .model import ModelConfig, RankingModel

MAGIC = b"EDGR"
FORMAT_VERSION = 1
DIGEST_LEN = 32


class ModelFileError(RuntimeError):
    """Corrupt, truncated, or incompatible weights file."""


def save_model(model: RankingModel, path: str | Path) -> str:
    """Write the weights file; returns its hex digest."""
    arrays = model.state_arrays()
    directory = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        le = a.astype(a.dtype.newbyteorder("<"), copy=False)
        blob = le.tobytes()
        directory.append({
            "name": name,
            "shape": list(a.shape),
            "dtype": str(a.dtype),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = {
        "schema": model.schema,
        "model_config": _config_to_dict(model.model_config),
        "feature_config": asdict(model.feature_config),
        "seed": model.seed,
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(header_bytes)) + header_bytes
    body += b"".join(blobs)
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)
    return digest.hex()


def _config_to_dict(mc: ModelConfig) -> dict:
    d = asdict(mc)
    d["tower_dims"] = list(mc.tower_dims)
    d["loss_weights"] = list(mc.loss_weights)
    return d


def _config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["tower_dims"] = tuple(d["tower_dims"])
    d["loss_weights"] = tuple(d["loss_weights"])
    return ModelConfig(**d)


def load_model(path: str | Path) -> RankingModel:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 + DIGEST_LEN or raw[:4] != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    body, stored = raw[:-DIGEST_LEN], raw[-DIGEST_LEN:]
    if hashlib.sha256(body).digest() != stored:
        raise ModelFileError(f"{path}: digest mismatch, model corrupt or outdated")
    version, header_len = struct.unpack_from("<II", body, 4)
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported format version {version}")
    header = json.loads(body[12:12 + header_len].decode())
    data = body[12 + header_len:]
    arrays = {}
    for entry in header["tensors"]:
        dt = np.dtype(entry["dtype"]).newbyteorder("<")
        blob = data[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arrays[entry["name"]] = (
            np.frombuffer(blob, dtype=dt).reshape(entry["shape"]).astype(entry["dtype"])
        )
    model = RankingModel(
        model_config=_config_from_dict(header["model_config"]),
        feature_config=FeatureConfig(**header["feature_config"]),
        seed=header["seed"],
    )
    if model.schema != header["schema"]:
        raise ModelFileError(f"{path}: schema string does not match feature config")
    model.load_state_arrays(arrays)
    return model


def file_digest(path: str | Path) -> str:
    raw = Path(path).read_bytes()
    if len(raw) < DIGEST_LEN:
        raise ModelFileError(f"{path}: truncated")
    return raw[-DIGEST_LEN:].hex()


def update_required(client_digest: str | None, registry_digest: str) -> bool:
    """Version negotiation: the client re-downloads when digests differ."""
    return client_digest != registry_digest
