# Soliton Lab - Store Module

from .artifacts import ArtifactStore, Provenance, dumps
from .snapshots import SnapshotFile, SnapshotHeader, read_snapshots, write_snapshots

__all__ = [
    'ArtifactStore', 'Provenance', 'dumps',
    'SnapshotFile', 'SnapshotHeader', 'read_snapshots', 'write_snapshots',
]
