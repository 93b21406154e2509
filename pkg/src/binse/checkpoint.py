"""Byte-stable checkpoint format.

Layout: 8-byte magic, uint32 format version, uint64 JSON header length, the
JSON header (model config, stft config, tensor manifest, optional extras),
then the concatenated little-endian tensor bytes in manifest order. Writing
the same state twice produces identical bytes (no timestamps, sorted keys).
"""

import json
import struct

import numpy as np
import torch

from .dsp import StftConfig
from .errors import CheckpointVersionError
from .model import BinauralMappingEnhancer, ModelConfig, config_from_dict, config_to_dict

MAGIC = b"BINSECK1"
FORMAT_VERSION = 1


def save_checkpoint(model: BinauralMappingEnhancer, path, extra: dict | None = None):
    state = model.state_dict()
    manifest = []
    blobs = []
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy()
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        manifest.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": config_to_dict(model.cfg),
        "stft_config": {
            "window_len": model.stft.cfg.window_len,
            "hop": model.stft.cfg.hop,
            "fft_size": model.stft.cfg.fft_size,
            "centered": model.stft.cfg.centered,
        },
        "tensors": manifest,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[BinauralMappingEnhancer, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointVersionError(f"{path}: not a recognized checkpoint file")
        version, header_len = struct.unpack("<IQ", fh.read(12))
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(f"{path}: unsupported format version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        state = {}
        for entry in header["tensors"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            dtype = np.dtype(entry["dtype"])
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise CheckpointVersionError(f"{path}: truncated tensor {entry['name']}")
            arr = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"]).copy()
            state[entry["name"]] = torch.from_numpy(arr)
    cfg = config_from_dict(header["model_config"])
    stft_cfg = StftConfig(**header["stft_config"])
    model = BinauralMappingEnhancer(cfg, stft_cfg)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointVersionError(f"{path}: state does not match config: {exc}") from exc
    return model, header["extra"]
