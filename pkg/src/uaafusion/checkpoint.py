"""Binary checkpoint: magic, version, config echo, sorted named-tensor table."""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError
from .fusion import FusionModel, ModelConfig

MAGIC = b"UAAF"
VERSION = 1


def serialize(config_echo, tensors):
    """config_echo = (K, C, C_cls, S); tensors = {name: np.ndarray}."""
    names = sorted(tensors)
    if len(names) != len(set(names)):
        raise DataError("duplicate tensor names")
    out = [MAGIC, struct.pack("<II", VERSION, len(names)),
           struct.pack("<4I", *config_echo)]
    for name in names:
        # note: ascontiguousarray would promote 0-d scalars to 1-d
        data = np.asarray(tensors[name], dtype=np.float32, order="C")
        enc = name.encode("utf-8")
        out.append(struct.pack("<I", len(enc)))
        out.append(enc)
        out.append(struct.pack("<I", data.ndim))
        out.append(struct.pack(f"<{data.ndim}I", *data.shape))
        out.append(data.tobytes())
    return b"".join(out)


def deserialize(blob):
    if blob[:4] != MAGIC:
        raise DataError(f"bad checkpoint magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    config_echo = struct.unpack_from("<4I", blob, 12)
    pos = 28
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        payload = blob[pos:pos + 4 * n]
        if len(payload) != 4 * n:
            raise DataError(f"truncated payload for tensor {name!r}")
        pos += 4 * n
        if name in tensors:
            raise DataError(f"duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    return config_echo, tensors


def save_model(path, model):
    echo = (model.config.stages, model.config.channels,
            model.config.num_classes, model.config.seg_channels)
    tensors = {name: p.data for name, p in model.named_parameters()}
    with open(path, "wb") as fh:
        fh.write(serialize(echo, tensors))


def load_model(path, ig_steps=5, eps=1e-8, ablate=None):
    """Rebuild a FusionModel from a checkpoint (runtime knobs from arguments)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    (stages, channels, num_classes, seg_channels), tensors = deserialize(blob)
    config = ModelConfig(stages=stages, channels=channels, seg_channels=seg_channels,
                         num_classes=num_classes, ig_steps=ig_steps, eps=eps)
    if ablate is not None:
        config.ablate = ablate
    model = FusionModel.init(config, seed=0)
    named = dict(model.named_parameters())
    if set(named) != set(tensors):
        raise DataError("checkpoint parameter names do not match the model layout")
    for name, p in named.items():
        if p.data.shape != tensors[name].shape:
            raise DataError(f"checkpoint shape mismatch for {name!r}")
        p.data = tensors[name]
    return model
