"""Versioned binary checkpoint container.

Layout: 8-byte magic, uint32 format version, uint64 manifest length, UTF-8
JSON manifest, then raw little-endian float32 parameter buffers in manifest
order. The manifest lists named networks (layer kind + hyperparameters +
parameter shapes + tap points) and an arbitrary ``extra`` block, so style
models can record their tap indices, eps and loss weight alongside the nets.
"""

import json
import struct

import numpy as np

from .layers import layer_from_manifest
from .network import Network

MAGIC = b"STYAUGN1"
VERSION = 1


def _network_manifest(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        layers.append({
            "kind": layer.kind,
            "hyperparams": layer.hyperparams(),
            "param_shapes": [list(p.shape) for p in layer.params()],
        })
    return {
        "layers": layers,
        "tap_points": list(net.tap_points),
        "input_shape": list(net.input_shape) if net.input_shape else None,
    }


def save_checkpoint(path, networks: dict, extra: dict | None = None) -> None:
    """Write named networks plus an extra manifest block to ``path``."""
    manifest = {
        "networks": {name: _network_manifest(net) for name, net in networks.items()},
        "network_order": list(networks.keys()),
        "extra": extra or {},
    }
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in manifest["network_order"]:
            for layer in networks[name].layers:
                for p in layer.params():
                    fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (networks dict, extra dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a styleaug checkpoint (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        networks = {}
        for name in manifest["network_order"]:
            m = manifest["networks"][name]
            layers = []
            for entry in m["layers"]:
                layer = layer_from_manifest(entry["kind"], entry["hyperparams"])
                for p, shape in zip(layer.params(), entry["param_shapes"]):
                    n = int(np.prod(shape))
                    buf = fh.read(4 * n)
                    if len(buf) != 4 * n:
                        raise ValueError("truncated checkpoint")
                    p.data = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
                layers.append(layer)
            in_shape = m["input_shape"]
            networks[name] = Network(layers, m["tap_points"],
                                     tuple(in_shape) if in_shape else None)
    return networks, manifest["extra"]
