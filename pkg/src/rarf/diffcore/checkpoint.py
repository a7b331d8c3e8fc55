"""Versioned binary checkpoint container.

Layout (all integers little endian)::

    b"RARF" | u16 version | u16 digest_len | digest (ascii hex)
    u32 config_len | config (utf-8 JSON)
    u32 n_params
      per param: u16 name_len | name | u8 trainable | u8 tag_len | tag
                 u8 ndim | u32 dim * ndim | f64 values (C order)
    u32 n_norm
      per variable: u16 name_len | name | f64 mean | f64 std

The digest is sha256 of the config bytes, so two checkpoints of the same
model configuration share a digest regardless of parameter values.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"RARF"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray]
    trainable: dict[str, bool] = field(default_factory=dict)
    tags: dict[str, str] = field(default_factory=dict)
    norm_stats: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def config_bytes(self) -> bytes:
        return json.dumps(self.config, sort_keys=True, separators=(",", ":")).encode()

    @property
    def config_digest(self) -> str:
        return hashlib.sha256(self.config_bytes).hexdigest()

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        digest = self.config_digest.encode("ascii")
        cfg = self.config_bytes
        buf.write(MAGIC)
        buf.write(struct.pack("<HH", VERSION, len(digest)))
        buf.write(digest)
        buf.write(struct.pack("<I", len(cfg)))
        buf.write(cfg)
        buf.write(struct.pack("<I", len(self.params)))
        for name, arr in self.params.items():
            nb = name.encode()
            tag = self.tags.get(name, "").encode()
            arr = np.ascontiguousarray(arr, dtype="<f8")
            buf.write(struct.pack("<H", len(nb)))
            buf.write(nb)
            buf.write(struct.pack("<BB", int(self.trainable.get(name, True)), len(tag)))
            buf.write(tag)
            buf.write(struct.pack("<B", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(arr.tobytes())
        buf.write(struct.pack("<I", len(self.norm_stats)))
        for name, (mu, sd) in self.norm_stats.items():
            nb = name.encode()
            buf.write(struct.pack("<H", len(nb)))
            buf.write(nb)
            buf.write(struct.pack("<dd", mu, sd))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        view = memoryview(raw)
        pos = 0

        def read(n: int) -> bytes:
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointError("truncated checkpoint")
            out = bytes(view[pos:pos + n])
            pos += n
            return out

        def unpack(fmt: str):
            return struct.unpack(fmt, read(struct.calcsize(fmt)))

        if read(4) != MAGIC:
            raise CheckpointError("not a RARF checkpoint (bad magic)")
        version, dlen = unpack("<HH")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        digest = read(dlen).decode("ascii")
        (clen,) = unpack("<I")
        cfg_bytes = read(clen)
        if hashlib.sha256(cfg_bytes).hexdigest() != digest:
            raise CheckpointError("config digest mismatch")
        config = json.loads(cfg_bytes)
        params, trainable, tags = {}, {}, {}
        (n,) = unpack("<I")
        for _ in range(n):
            (nl,) = unpack("<H")
            name = read(nl).decode()
            tr, tl = unpack("<BB")
            tags[name] = read(tl).decode()
            trainable[name] = bool(tr)
            (ndim,) = unpack("<B")
            shape = unpack(f"<{ndim}I") if ndim else ()
            count = int(np.prod(shape, dtype=np.int64))
            params[name] = np.frombuffer(read(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        norm = {}
        (nn,) = unpack("<I")
        for _ in range(nn):
            (nl,) = unpack("<H")
            name = read(nl).decode()
            norm[name] = unpack("<dd")
        if pos != len(view):
            raise CheckpointError("trailing bytes after checkpoint")
        return cls(config, params, trainable, tags, norm)

    def save(self, path) -> str:
        raw = self.to_bytes()
        Path(path).write_bytes(raw)
        return hashlib.sha256(raw).hexdigest()

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())

    def file_digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()
