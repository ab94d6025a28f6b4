"""Binary checkpoint format.

Layout: 4 magic bytes, uint32 LE format version, uint64 LE manifest
length, canonical JSON manifest, then parameter blobs as little-endian
float64 in manifest order. The manifest is always re-serialized
canonically (sorted keys, no whitespace), so save(load(f)) == f
byte-for-byte.
"""

import hashlib
import json
import struct

import numpy as np

from .autodiff import Tensor
from .model import ModelConfig

MAGIC = b"TVCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def vocab_hash(vocab):
    h = hashlib.sha256()
    h.update(vocab.kind.encode())
    for t in vocab.id_to_token:
        h.update(b"\x00" + t.encode())
    return h.hexdigest()


def _manifest_bytes(manifest):
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()


def save(path, params, cfg, vhash="", step=0, seed=0):
    names = sorted(params)
    manifest = {
        "config": cfg.to_dict(),
        "vocab_hash": vhash,
        "step": int(step),
        "seed": int(seed),
        "params": [[n, list(params[n].values.shape)] for n in names],
    }
    mb = _manifest_bytes(manifest)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(mb)))
        f.write(mb)
        for n in names:
            f.write(params[n].values.astype("<f8").tobytes())
    return path


def load(path):
    """Returns (params, cfg, manifest). Parameters require grad."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (mlen,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(mlen))
        params = {}
        for name, shape in manifest["params"]:
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"{path}: truncated blob for {name}")
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
            params[name] = Tensor(arr.copy(), requires_grad=True)
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after parameter blobs")
    cfg = ModelConfig.from_dict(manifest["config"])
    return params, cfg, manifest
