"""Versioned binary container for named model weights.

Byte layout (all integers little-endian, documented in
docs/checkpoint_format.md and kept in sync with this module):

    offset  size  field
    0       4     magic "MCKP"
    4       4     u32 format version (currently 1)
    8       2     u16 architecture-tag byte length A
    10      A     architecture tag, UTF-8
    ..      4     u32 metadata byte length M
    ..      M     metadata document, UTF-8 "key = value" lines
    ..      4     u32 entry count E
    per entry:
            2     u16 name byte length
            n     entry name, UTF-8
            1     u8 dtype code (0 = float32, 1 = float64)
            1     u8 rank
            4*r   u32 dims
            *     raw C-order little-endian values

Round-trips are bit-exact; writes go through a temp file + rename so a
half-written checkpoint can never be picked up.
"""

import os
import struct

import numpy as np

from ..errors import ConfigError

MAGIC = b"MCKP"
FORMAT_VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR_KIND = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class Checkpoint:
    """Named weights + architecture tag + human-readable metadata."""

    def __init__(self, tag, entries=None, meta=None):
        self.tag = tag
        self.entries = dict(entries or {})
        self.meta = dict(meta or {})

    def meta_document(self):
        return "".join(f"{k} = {v}\n" for k, v in self.meta.items())

    @staticmethod
    def parse_meta(doc):
        meta = {}
        for line in doc.splitlines():
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
        return meta

    def save(self, path):
        blob = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
        tag_b = self.tag.encode("utf-8")
        blob.append(struct.pack("<H", len(tag_b)))
        blob.append(tag_b)
        meta_b = self.meta_document().encode("utf-8")
        blob.append(struct.pack("<I", len(meta_b)))
        blob.append(meta_b)
        blob.append(struct.pack("<I", len(self.entries)))
        for name, arr in self.entries.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _CODE_FOR_KIND:
                raise ConfigError(f"checkpoint entry '{name}' has unsupported dtype {arr.dtype}")
            name_b = name.encode("utf-8")
            blob.append(struct.pack("<H", len(name_b)))
            blob.append(name_b)
            blob.append(struct.pack("<BB", _CODE_FOR_KIND[arr.dtype], arr.ndim))
            blob.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            blob.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "wb") as fh:
            fh.write(b"".join(blob))
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            buf = fh.read()
        if buf[:4] != MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack_from("<I", buf, 4)
        if version != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        off = 8
        (tag_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        tag = buf[off:off + tag_len].decode("utf-8")
        off += tag_len
        (meta_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        meta = cls.parse_meta(buf[off:off + meta_len].decode("utf-8"))
        off += meta_len
        (n_entries,) = struct.unpack_from("<I", buf, off)
        off += 4
        entries = {}
        for _ in range(n_entries):
            (name_len,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + name_len].decode("utf-8")
            off += name_len
            code, ndim = struct.unpack_from("<BB", buf, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            dtype = _DTYPE_CODES[code]
            count = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off).reshape(dims)
            off += count * dtype.itemsize
            entries[name] = arr.copy()
        return cls(tag, entries=entries, meta=meta)
