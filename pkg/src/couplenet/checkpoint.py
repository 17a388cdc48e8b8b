"""Versioned binary checkpoint: a JSON table of named tensors followed by
their raw float64 little-endian payloads.

Layout (all integers little-endian):
  bytes 0-3    magic "CPNT"
  bytes 4-7    uint32 format version (currently 1)
  bytes 8-15   uint64 header length in bytes
  header       UTF-8 JSON: {"config": <echo>, "tensors": [{"name", "shape",
               "offset", "nbytes"}, ...]}; offsets are relative to the end
               of the header
  payload      concatenated C-order float64 little-endian tensor data
"""

import json
import struct

import numpy as np

MAGIC = b"CPNT"
VERSION = 1


def save_checkpoint(path, params, config_echo):
    tensors = []
    payload = bytearray()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        tensors.append({"name": name, "shape": list(arr.shape),
                        "offset": len(payload), "nbytes": arr.nbytes})
        payload += arr.tobytes()
    header = json.dumps({"config": config_echo, "tensors": tensors},
                        sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(payload)


def load_checkpoint(path):
    """Returns (params dict, config echo)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode())
    base = 16 + hlen
    params = {}
    for t in header["tensors"]:
        start = base + t["offset"]
        arr = np.frombuffer(data[start:start + t["nbytes"]], dtype="<f8")
        params[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
    return params, header["config"]
