"""Binary cache of ingested epochs, one file per recording.

File layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"IITC"
    4       1     format version (currently 1)
    5       4     uint32 header length H
    9       H     UTF-8 JSON header: subject_id, recording_id, sample_rate,
                  n_epochs, epoch_samples, source_hash
    9+H     n     uint8 stage labels (0-4)
    ...     8n    int64 night positions
    ...     4nS   float32 samples, row-major (n_epochs, epoch_samples)

The cache is independent of the sequence length; sequences are built on load.
File names are ``<source_hash[:16]>-<recording_id>.iitc``.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .ingest import EpochArray

MAGIC = b"IITC"
VERSION = 1
CACHE_ENV = "IITNET_CACHE"


class CacheFormatError(Exception):
    pass


def default_cache_root() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "iitnet"))


def cache_name(arr: EpochArray, source_hash: str) -> str:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in arr.recording_id)
    return f"{source_hash[:16]}-{safe}.iitc"


def write_cache(path, arr: EpochArray, source_hash: str = "") -> Path:
    path = Path(path)
    header = json.dumps({
        "subject_id": arr.subject_id,
        "recording_id": arr.recording_id,
        "sample_rate": arr.sample_rate,
        "n_epochs": len(arr),
        "epoch_samples": arr.samples.shape[1],
        "source_hash": source_hash,
    }).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BI", VERSION, len(header)))
        f.write(header)
        f.write(arr.labels.astype(np.uint8).tobytes())
        f.write(arr.positions.astype("<i8").tobytes())
        f.write(arr.samples.astype("<f4").tobytes())
    os.replace(tmp, path)
    return path


def read_cache(path) -> EpochArray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CacheFormatError(f"{path}: not an iitnet cache file")
    version, hlen = struct.unpack_from("<BI", raw, 4)
    if version != VERSION:
        raise CacheFormatError(f"{path}: cache version {version}, this build reads {VERSION}")
    meta = json.loads(raw[9:9 + hlen])
    n, s = meta["n_epochs"], meta["epoch_samples"]
    off = 9 + hlen
    expected = off + n + 8 * n + 4 * n * s
    if len(raw) != expected:
        raise CacheFormatError(f"{path}: size {len(raw)} bytes, header implies {expected}")
    labels = np.frombuffer(raw, np.uint8, n, off)
    positions = np.frombuffer(raw, "<i8", n, off + n)
    samples = np.frombuffer(raw, "<f4", n * s, off + 9 * n).reshape(n, s)
    return EpochArray(samples, labels, positions, meta["subject_id"], meta["recording_id"],
                      meta["sample_rate"])


def read_cache_dir(root) -> list:
    files = sorted(Path(root).glob("*.iitc"))
    return [read_cache(p) for p in files]
