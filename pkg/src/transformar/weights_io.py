"""Reader and writer for the ARWT weight-file format.

Layout (all integers little-endian)::

    b"ARWT"  u32 version (=1)  u32 tensor_count
    per tensor:
        u16 name_length, UTF-8 name, u8 dtype (0 = float64 LE), u8 rank,
        u32 dims[rank], row-major payload
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, TruncatedWeightFileError, UnknownDtypeError, WeightFormatError

MAGIC = b"ARWT"
VERSION = 1
DTYPES = {0: np.dtype("<f8")}


def encode_weights(arrays: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.array(arr, dtype="<f8", order="C")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BB", 0, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedWeightFileError(
                f"{self.source}: truncated while reading {what} at byte {self.pos} "
                f"(need {n}, have {len(self.blob) - self.pos})"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_weights(blob: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    r = _Reader(blob, source)
    if r.take(4, "magic") != MAGIC:
        raise WeightFormatError(f"{source}: not an ARWT weight file (bad magic)")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise WeightFormatError(f"{source}: unsupported ARWT version {version}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(f"{source}: tensor name is not valid UTF-8") from exc
        dtype_code, rank = r.unpack("<BB", f"header of {name!r}")
        if dtype_code not in DTYPES:
            raise UnknownDtypeError(f"{source}: tensor {name!r} has unknown dtype code {dtype_code}")
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}")
        dtype = DTYPES[dtype_code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = r.take(nbytes, f"payload of {name!r}")
        if name in arrays:
            raise WeightFormatError(f"{source}: duplicate tensor {name!r}")
        arrays[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).astype(np.float64)
    if r.pos != len(blob):
        raise WeightFormatError(f"{source}: {len(blob) - r.pos} trailing bytes after last tensor")
    return arrays


def write_weights(path, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_weights(arrays))


def read_weights(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"weight file not found: {path}")
    return decode_weights(path.read_bytes(), str(path))
