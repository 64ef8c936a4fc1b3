"""Binary policy files.

Layout (all integers little-endian)::

    magic      8 bytes  b"TJAPPOL\\0"
    version    uint32
    meta_len   uint32, then meta_len bytes of UTF-8 JSON
               (architecture tag, q, n_max, ...)
    count      uint32   number of tensors
    per tensor:
        name_len uint32, name (UTF-8)
        ndim     uint32, ndim x uint32 shape
        data     float32 little-endian, row-major
    crc32      uint32   over every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from ..errors import PolicyFileError
from .networks import PolicyNetwork

MAGIC = b"TJAPPOL\0"
VERSION = 1


def policy_bytes(net: PolicyNetwork, meta: dict | None = None) -> bytes:
    meta = {"arch": net.arch, "q": net.q, **(meta or {})}
    meta_raw = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_raw)), meta_raw]
    state = net.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        raw_name = name.encode()
        arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        parts.append(struct.pack("<I", len(raw_name)) + raw_name)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_policy(net: PolicyNetwork, path: str | Path, meta: dict | None = None) -> None:
    Path(path).write_bytes(policy_bytes(net, meta))


def load_policy(path: str | Path) -> tuple[PolicyNetwork, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise PolicyFileError(f"cannot read policy file {path}: {exc}") from exc
    if len(data) < len(MAGIC) + 16 or data[:len(MAGIC)] != MAGIC:
        raise PolicyFileError(f"{path} is not a policy file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise PolicyFileError(f"{path} failed its integrity check")
    off = len(MAGIC)
    version, meta_len = struct.unpack_from("<II", body, off)
    if version != VERSION:
        raise PolicyFileError(f"unsupported policy file version {version}")
    off += 8
    meta = json.loads(body[off:off + meta_len])
    off += meta_len
    (count,) = struct.unpack_from("<I", body, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", body, off)
        off += 4
        name = body[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<I", body, off)
        shape = struct.unpack_from(f"<{ndim}I", body, off + 4)
        off += 4 + 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        tensors[name] = torch.from_numpy(arr.astype(np.float32))
    if off != len(body):
        raise PolicyFileError(f"{path} has trailing bytes")
    net = PolicyNetwork(meta["arch"], meta["q"])
    try:
        net.load_state_dict(tensors)
    except RuntimeError as exc:
        raise PolicyFileError(f"{path} does not match {meta['arch']}: {exc}") from exc
    net.eval()
    return net, meta
