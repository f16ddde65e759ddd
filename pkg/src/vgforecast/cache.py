"""Content-addressed caches for per-window graphs and embeddings.

Both caches append records to a single data file and keep a text index
mapping (window-hash, channel) to offsets, so hundreds of thousands of
tiny artifacts do not become hundreds of thousands of files.  Records are
validated on read; anything malformed is treated as a miss so callers
recompute instead of crashing.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .visibility import VisibilityGraph, parse_graph, serialize_graph

EMB_MAGIC = b"VGEMBED\x00"          # 8 bytes
EMB_VERSION = 1
_EMB_HEADER = struct.Struct("<8sII")   # magic, version, reserved -> 16 bytes
_EMB_SHAPE = struct.Struct("<II")      # n, dim


class CacheError(RuntimeError):
    pass


def _load_index(path: Path, fields: int) -> dict:
    index = {}
    if not path.exists():
        return index
    try:
        for line in path.read_text().splitlines():
            parts = line.split()
            if len(parts) != fields:
                raise ValueError(line)
            key = (parts[0], int(parts[1]))
            index[key] = tuple(int(p) for p in parts[2:])
    except (ValueError, OSError):
        return {}
    return index


def _append_index(path: Path, key: tuple[str, int], payload: tuple[int, ...]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(" ".join([key[0], str(key[1]), *(str(p) for p in payload)]) + "\n")


class EmbeddingCache:
    """Binary records of (n, dim) float64 embedding matrices per (hash, channel)."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.data_path = self.dir / "embeddings.bin"
        self.index_path = self.dir / "embeddings.idx"
        self._index = _load_index(self.index_path, 3)
        self.corrupt_reads = 0

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, window_hash: str, channel: int) -> np.ndarray | None:
        key = (window_hash, channel)
        entry = self._index.get(key)
        if entry is None:
            return None
        (offset,) = entry
        try:
            with open(self.data_path, "rb") as fh:
                fh.seek(offset)
                header = fh.read(_EMB_HEADER.size)
                magic, version, _ = _EMB_HEADER.unpack(header)
                if magic != EMB_MAGIC or version != EMB_VERSION:
                    raise ValueError("bad record header")
                n, dim = _EMB_SHAPE.unpack(fh.read(_EMB_SHAPE.size))
                if not (0 < n < 1_000_000 and 0 < dim < 1_000_000):
                    raise ValueError("implausible record shape")
                raw = fh.read(n * dim * 8)
                if len(raw) != n * dim * 8:
                    raise ValueError("truncated record")
                return np.frombuffer(raw, dtype="<f8").reshape(n, dim).copy()
        except (OSError, ValueError, struct.error):
            self.corrupt_reads += 1
            del self._index[key]
            return None

    def put(self, window_hash: str, channel: int, matrix: np.ndarray) -> None:
        key = (window_hash, channel)
        if key in self._index:
            return
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise CacheError("embedding record must be a 2-D matrix")
        buf = io.BytesIO()
        buf.write(_EMB_HEADER.pack(EMB_MAGIC, EMB_VERSION, 0))
        buf.write(_EMB_SHAPE.pack(matrix.shape[0], matrix.shape[1]))
        buf.write(matrix.astype("<f8").tobytes())
        with open(self.data_path, "ab") as fh:
            offset = fh.tell()
            fh.write(buf.getvalue())
            fh.flush()
            os.fsync(fh.fileno())
        self._index[key] = (offset,)
        _append_index(self.index_path, key, (offset,))


@dataclass(frozen=True)
class GraphRecord:
    graph: VisibilityGraph
    ci_raw: np.ndarray


class GraphCache:
    """Edge-list text plus one-decimal-per-line CI vectors per (hash, channel)."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.data_path = self.dir / "graphs.dat"
        self.index_path = self.dir / "graphs.idx"
        self._index = _load_index(self.index_path, 4)
        self.corrupt_reads = 0

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, window_hash: str, channel: int) -> GraphRecord | None:
        key = (window_hash, channel)
        entry = self._index.get(key)
        if entry is None:
            return None
        offset, length = entry
        try:
            with open(self.data_path, "rb") as fh:
                fh.seek(offset)
                raw = fh.read(length)
            if len(raw) != length:
                raise ValueError("truncated record")
            text = raw.decode("utf-8")
            graph_text, _, ci_text = text.partition("\n--ci--\n")
            graph = parse_graph(graph_text)
            ci_vals = np.array([float(ln) for ln in ci_text.strip().splitlines()])
            if ci_vals.size != graph.n:
                raise ValueError("CI length mismatch")
            return GraphRecord(graph=graph, ci_raw=ci_vals)
        except Exception:
            self.corrupt_reads += 1
            del self._index[key]
            return None

    def put(self, window_hash: str, channel: int, graph: VisibilityGraph,
            ci_raw: np.ndarray) -> None:
        key = (window_hash, channel)
        if key in self._index:
            return
        ci_lines = "\n".join(repr(float(x)) for x in ci_raw)
        payload = (serialize_graph(graph) + "--ci--\n" + ci_lines + "\n").encode("utf-8")
        with open(self.data_path, "ab") as fh:
            offset = fh.tell()
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        self._index[key] = (offset, len(payload))
        _append_index(self.index_path, key, (offset, len(payload)))
