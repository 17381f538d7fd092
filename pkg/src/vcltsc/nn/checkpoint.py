"""Binary checkpoints.

Layout (little endian)::

    magic  b"VCLTSCK1"
    u32    format version
    32 B   sha256 architecture hash over every stored net
    f64 d, f64 l1, u32 n         partition the nets were trained with (n = 0: none)
    u32 k, f64 * k               norm_state maxima
    u32 len, utf-8 JSON          metadata incl. per-net architectures
    u32 nets; per net: u32 params; per param: u32 ndim, u32 * ndim, f32 data
    u32    CRC32 of all preceding bytes
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ArchitectureMismatch, ChecksumMismatch
from .net import Sequential

MAGIC = b"VCLTSCK1"
VERSION = 1


@dataclass
class Checkpoint:
    nets: dict[str, Sequential]
    partition: tuple[float, float, int] | None = None
    norm_max: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def arch_hash(self) -> bytes:
        return combined_hash(self.nets)


def combined_hash(nets: dict[str, Sequential]) -> bytes:
    blob = json.dumps({k: n.architecture() for k, n in sorted(nets.items())}, sort_keys=True).encode()
    return hashlib.sha256(blob).digest()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    names = sorted(ckpt.nets)
    meta = dict(ckpt.meta)
    meta["nets"] = {k: ckpt.nets[k].architecture() for k in names}
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", VERSION)
    buf += ckpt.arch_hash()
    d, l1, n = ckpt.partition if ckpt.partition else (0.0, 0.0, 0)
    buf += struct.pack("<ddI", d, l1, n)
    norm = np.asarray(ckpt.norm_max if ckpt.norm_max is not None else [], dtype="<f8")
    buf += struct.pack("<I", norm.size) + norm.tobytes()
    mj = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf += struct.pack("<I", len(mj)) + mj
    buf += struct.pack("<I", len(names))
    for k in names:
        arrays = ckpt.nets[k].param_arrays()
        buf += struct.pack("<I", len(arrays))
        for a in arrays:
            buf += struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
            buf += np.ascontiguousarray(a, dtype="<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(buf))
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path, expected_hash: bytes | None = None) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise ChecksumMismatch(f"{path}: not a checkpoint file")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch(f"{path}: CRC mismatch")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise ChecksumMismatch(f"{path}: unsupported format version {version}")
    stored_hash = raw[off:off + 32]
    off += 32
    d, l1, n = struct.unpack_from("<ddI", raw, off)
    off += struct.calcsize("<ddI")
    (k,) = struct.unpack_from("<I", raw, off)
    off += 4
    norm = np.frombuffer(raw, dtype="<f8", count=k, offset=off).copy() if k else None
    off += 8 * k
    (ml,) = struct.unpack_from("<I", raw, off)
    off += 4
    meta = json.loads(raw[off:off + ml].decode("utf-8"))
    off += ml
    archs = meta.pop("nets")
    nets = {name: Sequential.from_architecture(archs[name], name=name) for name in sorted(archs)}
    if combined_hash(nets) != stored_hash:
        raise ArchitectureMismatch(f"{path}: stored architecture hash does not match its layer specs")
    if expected_hash is not None and stored_hash != expected_hash:
        raise ArchitectureMismatch(f"{path}: architecture differs from the requested one")
    (n_nets,) = struct.unpack_from("<I", raw, off)
    off += 4
    for name in sorted(archs)[:n_nets]:
        (n_arr,) = struct.unpack_from("<I", raw, off)
        off += 4
        for dst in nets[name].param_arrays()[:n_arr]:
            (ndim,) = struct.unpack_from("<I", raw, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            if tuple(shape) != dst.shape:
                raise ArchitectureMismatch(f"{path}: parameter shape {shape} != {dst.shape}")
            cnt = int(np.prod(shape))
            dst[...] = np.frombuffer(raw, dtype="<f4", count=cnt, offset=off).reshape(shape)
            off += 4 * cnt
    return Checkpoint(nets, (d, l1, n) if n else None, norm, meta)
