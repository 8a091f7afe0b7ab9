"""Versioned binary checkpoint format.

Layout: magic "ILMT", u32 format version, u32 header length, JSON header
(config, language list, parameter manifest with names/shapes/offsets),
payload of concatenated little-endian float32 blobs in manifest order, and
a trailing CRC32 of the payload. Loading reproduces every parameter
bit-exactly; unknown header keys are ignored, unknown versions rejected.
"""

import json
import struct
import zlib

import numpy as np

from .model import ModelConfig, MultilingualModel

MAGIC = b"ILMT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save(model, path, extra=None):
    params = model.parameters()
    manifest = []
    offset = 0
    blobs = []
    for name, p in params.items():
        blob = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(p.shape),
                         "offset": offset})
        offset += len(blob)
        blobs.append(blob)
    header = {
        "config": model.config.to_dict(),
        "languages": list(model.config.languages),
        "manifest": manifest,
    }
    if extra:
        header.update(extra)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(blobs)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def payload_crc(path):
    """CRC32 of the parameter payload (cheap run-identity fingerprint)."""
    with open(path, "rb") as f:
        blob = f.read()
    return struct.unpack("<I", blob[-4:])[0]


def load(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    header_end = 12 + header_len
    header = json.loads(blob[12:header_end].decode("utf-8"))
    payload = blob[header_end:-4]
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError("payload CRC mismatch; file corrupted")

    known = {f.name for f in ModelConfig.__dataclass_fields__.values()} \
        if hasattr(ModelConfig, "__dataclass_fields__") else set()
    cfg_dict = {k: v for k, v in header["config"].items() if k in known}
    config = ModelConfig.from_dict(cfg_dict)
    model = MultilingualModel(config)
    params = model.parameters()
    for entry in header["manifest"]:
        name = entry["name"]
        if name not in params:
            raise CheckpointError(f"unknown parameter {name!r} in manifest")
        shape = tuple(entry["shape"])
        p = params[name]
        if p.shape != shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file {shape}, model {p.shape}")
        count = int(np.prod(shape))
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count,
                            offset=start).reshape(shape)
        p.data[...] = arr
    return model, header
