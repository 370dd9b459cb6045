# Soliton Lab - Snapshot Files
# Binary columnar storage of complex field snapshots
#
# Layout (all little-endian):
#   offset  size  field
#   0       8     magic b"SLSNAP01"
#   8       4     version (uint32, currently 1)
#   12      4     dimension d (uint32)
#   16      4     points M (uint32)
#   20      4     snapshot count K (uint32)
#   24      8     radius R (float64)
#   32      8     omega (float64, NaN when not tied to a ground state)
#   40      8     dt (float64)
#   48      16    grid hash (ASCII, NUL padded)
#   64      8K    times (float64)
#   ...     8KM   real parts, snapshot-major (float64)
#   ...     8KM   imaginary parts, snapshot-major (float64)

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from solitonlab.shared.errors import StaleArtifactError

MAGIC = b"SLSNAP01"
VERSION = 1
HEADER = struct.Struct('<8sIIIIddd16s')


@dataclass(frozen=True)
class SnapshotHeader:
    dimension: int
    points: int
    count: int
    radius: float
    omega: float
    dt: float
    grid_hash: str
    version: int = VERSION

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.dimension, self.points, self.count, self.radius,
                           self.omega, self.dt, self.grid_hash.encode('ascii')[:16])

    @classmethod
    def unpack(cls, raw: bytes) -> 'SnapshotHeader':
        magic, version, dimension, points, count, radius, omega, dt, grid_hash = HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"not a snapshot file (magic {magic!r})")
        if version != VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        return cls(dimension, points, count, radius, omega, dt, grid_hash.rstrip(b'\0').decode('ascii'), version)


@dataclass
class SnapshotFile:
    header: SnapshotHeader
    times: np.ndarray
    fields: np.ndarray  # (K, M) complex


def write_snapshots(path: Path, header: SnapshotHeader, times: Sequence[float], fields: Sequence[np.ndarray]):
    times = np.asarray(times, dtype='<f8')
    data = np.asarray(fields, dtype=complex).reshape(len(times), header.points)
    with open(path, 'wb') as f:
        f.write(header.pack())
        f.write(times.tobytes())
        f.write(np.ascontiguousarray(data.real, dtype='<f8').tobytes())
        f.write(np.ascontiguousarray(data.imag, dtype='<f8').tobytes())


def read_snapshots(path: Path, expected_grid_hash: str = '') -> SnapshotFile:
    """
    Read a snapshot file.

    Raises:
        StaleArtifactError: expected_grid_hash given and different from the stored one
    """
    raw = Path(path).read_bytes()
    header = SnapshotHeader.unpack(raw[:HEADER.size])
    if expected_grid_hash and header.grid_hash != expected_grid_hash:
        raise StaleArtifactError(f"{path}: snapshots belong to grid {header.grid_hash}, "
                                 f"expected {expected_grid_hash}; rerun `solitonlab simulate`")
    k, m = header.count, header.points
    payload = np.frombuffer(raw, dtype='<f8', offset=HEADER.size)
    if payload.size != k * (1 + 2 * m):
        raise ValueError(f"{path}: truncated snapshot payload")
    times = payload[:k].copy()
    real = payload[k:k + k * m].reshape(k, m)
    imag = payload[k + k * m:].reshape(k, m)
    return SnapshotFile(header, times, real + 1j * imag)
