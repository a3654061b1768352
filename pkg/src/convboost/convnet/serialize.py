"""Network persistence: JSON descriptor plus a little-endian float64 blob."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import LoadError
from ..fileio import atomic_write
from .network import Network, build_layer

FORMAT = "convboost-network"
DTYPE = np.dtype("<f8")


def network_to_bytes(net: Network, meta: dict | None = None, blob_name: str = "network.bin") -> tuple[str, bytes]:
    """Return ``(descriptor_json, blob_bytes)`` for ``net``."""
    entries, chunks, offset = [], [], 0
    for name, arr in net.parameters().items():
        raw = np.ascontiguousarray(arr, dtype=DTYPE).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    desc = {
        "format": FORMAT,
        "version": 1,
        **net.describe(),
        "dtype": "float64-le",
        "blob": blob_name,
        "params": entries,
        "meta": meta or {},
    }
    return json.dumps(desc, indent=2, sort_keys=True) + "\n", b"".join(chunks)


def save_network(net: Network, descriptor_path: str | os.PathLike, meta: dict | None = None) -> None:
    descriptor_path = Path(descriptor_path)
    blob_name = descriptor_path.with_suffix(".bin").name
    desc, blob = network_to_bytes(net, meta, blob_name)
    atomic_write(descriptor_path.parent / blob_name, blob)
    atomic_write(descriptor_path, desc.encode())


def network_from_bytes(desc_text: str, blob: bytes) -> Network:
    try:
        desc = json.loads(desc_text)
        if desc.get("format") != FORMAT:
            raise LoadError(f"not a network descriptor (format={desc.get('format')!r})")
        shape = tuple(desc["input_shape"])
        layers = []
        for entry in desc["layers"]:
            layer = build_layer(entry, shape, rng=None)
            shape = layer.output_shape(shape)
            layers.append(layer)
        net = Network(layers, desc["input_shape"])
        params = {}
        for p in desc["params"]:
            end = p["offset"] + p["nbytes"]
            if end > len(blob):
                raise LoadError(f"parameter {p['name']} runs past the end of the blob")
            arr = np.frombuffer(blob[p["offset"]:end], dtype=DTYPE).astype(np.float64)
            params[p["name"]] = arr.reshape(p["shape"])
        net.set_parameters(params)
    except LoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"corrupt network descriptor: {exc}") from exc
    net.version = 0
    return net


def load_network(descriptor_path: str | os.PathLike) -> Network:
    descriptor_path = Path(descriptor_path)
    try:
        desc_text = descriptor_path.read_text()
        blob_name = json.loads(desc_text).get("blob", descriptor_path.with_suffix(".bin").name)
        blob = (descriptor_path.parent / blob_name).read_bytes()
    except (OSError, ValueError, AttributeError) as exc:
        raise LoadError(f"cannot read network from {descriptor_path}: {exc}") from exc
    return network_from_bytes(desc_text, blob)
