"""Model checkpoints.

File layout::

    DAECONF-CHECKPOINT\\n
    <one line of JSON: format version, architecture, confidence params,
     tensor table, training metadata>\\n
    <raw little-endian float64 blobs, in tensor-table order>

The JSON is written with sorted keys and no whitespace, so loading a file
and saving it again reproduces it byte for byte. Tied decoder weights are
not stored; they are the transposes of the stored encoder weights.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..classifier import JointModel, ModelSpec, build_model
from ..dae import ConfidenceParams
from ..errors import FormatError, UnsupportedVersionError
from ..nn import CoolHead
from ..tensor import Rng

MAGIC = b"DAECONF-CHECKPOINT\n"
FORMAT_VERSION = 1


def named_params(model: JointModel) -> list[tuple[str, np.ndarray]]:
    """Stable names for every trainable array the model owns."""
    out = []
    groups = [("encoder", model.encoder.layers)]
    if isinstance(model.head, CoolHead):
        groups.append(("head", [model.head.logits_layer]))
    else:
        groups.append(("head", model.head.layers))
    if model.decoder is not None:
        groups.append(("decoder", model.decoder.layers))
    for group, layers in groups:
        for i, layer in enumerate(layers):
            for pname, arr in layer.params():
                out.append((f"{group}.{i}.{pname}", arr))
    return out


def _header(model: JointModel) -> dict:
    tensors, offset = [], 0
    for name, arr in named_params(model):
        n = int(arr.size) * 8
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": n})
        offset += n
    spec = asdict(model.spec)
    spec["hidden"] = list(spec["hidden"])
    spec["image_shape"] = list(spec["image_shape"])
    spec["conv_channels"] = list(spec["conv_channels"])
    return {"format_version": FORMAT_VERSION, "spec": spec, "conf": asdict(model.conf),
            "sigma": model.sigma, "tensors": tensors, "metadata": model.history}


def dumps_checkpoint(model: JointModel) -> bytes:
    header = json.dumps(_header(model), sort_keys=True, separators=(",", ":"))
    blobs = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                     for _, a in named_params(model))
    return MAGIC + header.encode("utf-8") + b"\n" + blobs


def save_checkpoint(model: JointModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(model))
    return path


def loads_checkpoint(data: bytes) -> JointModel:
    if not data.startswith(MAGIC):
        raise FormatError("not a checkpoint: bad magic bytes")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise FormatError("checkpoint header is not terminated")
    try:
        header = json.loads(data[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint header is not valid JSON: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {version!r} is not supported (expected {FORMAT_VERSION})")
    spec_d = dict(header["spec"])
    spec_d["hidden"] = tuple(spec_d["hidden"])
    spec_d["image_shape"] = tuple(spec_d["image_shape"])
    spec_d["conv_channels"] = tuple(spec_d["conv_channels"])
    model = build_model(ModelSpec(**spec_d), Rng(0), ConfidenceParams(**header["conf"]),
                        header["sigma"])
    blob = data[end + 1:]
    params = dict(named_params(model))
    if sorted(params) != sorted(t["name"] for t in header["tensors"]):
        raise FormatError("checkpoint tensors do not match the architecture")
    for t in header["tensors"]:
        lo, hi = t["offset"], t["offset"] + t["nbytes"]
        if hi > len(blob):
            raise FormatError(f"tensor {t['name']} truncated at byte offset {len(blob)}")
        arr = np.frombuffer(blob[lo:hi], dtype="<f8").reshape(t["shape"])
        params[t["name"]][...] = arr
    total = sum(t["nbytes"] for t in header["tensors"])
    if len(blob) != total:
        raise FormatError(f"checkpoint has {len(blob) - total} unexpected trailing bytes")
    model.history = header.get("metadata", {})
    return model


def load_checkpoint(path) -> JointModel:
    return loads_checkpoint(Path(path).read_bytes())
