"""Binary checkpoint container shared by every stage.

Layout (all integers little-endian)::

    b"PREP"                     magic
    u16  version                (1)
    u16  len(kind) + kind       ascii: cbow | dan | svd | svm
    u32  len(meta) + meta       canonical JSON (sorted keys, compact)
    64   vocabulary hash        ascii hex sha256, zero-padded when absent
    u32  number of arrays
    per array:
        u16 len(name) + name    utf-8
        u8  ndim
        u64 shape[ndim]
        f64 data[prod(shape)]   row-major

Metadata is written canonically, so load followed by save reproduces the
file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"PREP"
VERSION = 1
KINDS = ("cbow", "dan", "svd", "svm")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    arrays: dict
    meta: dict = field(default_factory=dict)
    vocab_hash: str = ""

    def require_vocab(self, vocab_hash: str) -> None:
        if self.vocab_hash != vocab_hash:
            raise CheckpointError(
                f"vocabulary hash mismatch: checkpoint has {self.vocab_hash or '<none>'}, "
                f"data has {vocab_hash or '<none>'}")


def _canon(meta) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dumps(ck: Checkpoint) -> bytes:
    if ck.kind not in KINDS:
        raise CheckpointError(f"unknown component kind {ck.kind!r}")
    out = [MAGIC, struct.pack("<H", VERSION)]
    kind = ck.kind.encode("ascii")
    out.append(struct.pack("<H", len(kind)) + kind)
    meta = _canon(ck.meta)
    out.append(struct.pack("<I", len(meta)) + meta)
    vh = ck.vocab_hash.encode("ascii")
    if len(vh) > 64:
        raise CheckpointError("vocabulary hash longer than 64 characters")
    out.append(vh.ljust(64, b"\0"))
    out.append(struct.pack("<I", len(ck.arrays)))
    for name in sorted(ck.arrays):
        arr = np.asarray(ck.arrays[name], dtype="<f8", order="C")  # keeps 0-d shapes
        bname = name.encode("utf-8")
        out.append(struct.pack("<H", len(bname)) + bname)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(buf: bytes) -> Checkpoint:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError("truncated checkpoint")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = struct.unpack("<H", take(2))
    kind = take(n).decode("ascii")
    (n,) = struct.unpack("<I", take(4))
    meta = json.loads(take(n).decode("utf-8"))
    vocab_hash = take(64).rstrip(b"\0").decode("ascii")
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(buf):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(kind, arrays, meta, vocab_hash)


def save(path, ck: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ck))


def load(path, kind: str | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        ck = loads(fh.read())
    if kind is not None and ck.kind != kind:
        raise CheckpointError(f"expected a {kind} checkpoint, got {ck.kind}")
    return ck
