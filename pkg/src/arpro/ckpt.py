"""JSON checkpoints for model parameters (schema ``arpro-ckpt-v1``).

A checkpoint is a single JSON document carrying the layer layout and all
float64 parameters as one base64 blob of little-endian bytes. Loading
validates the schema tag, the expected kind, and finiteness of every value.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .tensor import Array, Mlp

SCHEMA = "arpro-ckpt-v1"


def encode_arrays(arrays) -> str:
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return base64.b64encode(blob).decode("ascii")


def decode_array(data: str, count: int) -> Array:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if values.size != count:
        raise ValueError(f"checkpoint data holds {values.size} values, expected {count}")
    if not np.all(np.isfinite(values)):
        raise ValueError("checkpoint contains non-finite parameter values")
    return values


def write(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read(path, expected_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("schema") != SCHEMA:
        raise ValueError(f"{path}: expected schema {SCHEMA!r}, got {payload.get('schema')!r}")
    if expected_kind is not None and payload.get("kind") != expected_kind:
        raise ValueError(f"{path}: expected kind {expected_kind!r}, got {payload.get('kind')!r}")
    return payload


def mlp_payload(net: Mlp, kind: str = "mlp", extra: dict | None = None) -> dict:
    payload = {
        "schema": SCHEMA,
        "kind": kind,
        "layers": net.layer_dims(),
        "in_dim": net.in_dim,
        "time_embed": net.time_embed,
        "data": encode_arrays([p.data for p in net.parameters()]),
    }
    if extra:
        payload.update(extra)
    return payload


def mlp_from_payload(payload: dict) -> Mlp:
    layers = payload["layers"]
    if not layers:
        raise ValueError("checkpoint has no layers")
    time_embed = payload.get("time_embed")
    in_dim = int(payload.get("in_dim", layers[0]["in"]))
    expected_first = in_dim + (time_embed or 0)
    if layers[0]["in"] != expected_first:
        raise ValueError(
            f"first layer expects {layers[0]['in']} inputs, "
            f"but in_dim={in_dim} and time_embed={time_embed}"
        )
    for prev, cur in zip(layers, layers[1:]):
        if prev["out"] != cur["in"]:
            raise ValueError(f"layer dimensions do not compose: {prev} -> {cur}")
    hidden = [layer["out"] for layer in layers[:-1]]
    net = Mlp(
        in_dim,
        hidden,
        layers[-1]["out"],
        acts=[layer["act"] for layer in layers],
        time_embed=time_embed,
    )
    count = sum(l["in"] * l["out"] + l["out"] for l in layers)
    flat = decode_array(payload["data"], count)
    offset = 0
    for w, b in zip(net.weights, net.biases):
        k = w.data.size
        w.data = flat[offset : offset + k].reshape(w.data.shape).copy()
        offset += k
        k = b.data.size
        b.data = flat[offset : offset + k].reshape(b.data.shape).copy()
        offset += k
    return net
