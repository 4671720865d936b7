"""WTS1 weight files: named float32 tensors plus a JSON metadata sidecar.

Layout (little-endian): magic "WTS1", version u16, tensor count u32, then
per tensor: name length u16, UTF-8 name, rank u8, dims as u32, float32 data.
The sidecar lives next to the weight file with ".json" appended.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"WTS1"
VERSION = 1


def sidecar_path(path: Path) -> Path:
    return Path(str(path) + ".json")


def save_weights(path: Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(tensors)))
        for name, arr in tensors.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_weights(path: Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    off = 4
    try:
        version, count = struct.unpack_from("<HI", raw, off)
        off += 6
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", raw, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            end = off + 4 * n
            if end > len(raw):
                raise FormatError(f"{path}: truncated tensor '{name}'")
            tensors[name] = np.frombuffer(raw[off:end], dtype="<f4").reshape(dims).copy()
            off = end
    except struct.error as e:
        raise FormatError(f"{path}: truncated header ({e})") from None
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")

    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return tensors, meta
