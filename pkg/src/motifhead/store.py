"""Binary embedding store: one float32 vector per image id.

File layout (all integers little-endian):

    offset 0   magic           4 bytes, b"MHED"
    offset 4   format version  u32 (currently 1)
    offset 8   embedding_dim   u32
    offset 12  record count    u64
    offset 20  index block     count entries of
                               (id_length u16, id bytes UTF-8, payload_offset u64)
    ...        payloads        embedding_dim float32 values per record, at the
                               absolute offsets recorded in the index

The payload of record i starts where record i-1's ends; writers emit records
in index order so the file round-trips bit-exactly. Embeddings are stored as
float32 and widened to float64 on read, since all training math is 64-bit.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError

MAGIC = b"MHED"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


def write_store(path: str | Path, dim: int,
                embeddings: Mapping[str, np.ndarray]) -> None:
    """Write a store file. Iteration order of ``embeddings`` is preserved."""
    if dim < 1:
        raise DataError(f"embedding_dim must be >= 1, got {dim}")
    ids = list(embeddings.keys())
    if len(set(ids)) != len(ids):
        raise DataError("duplicate image ids in store payload")
    index_size = sum(2 + len(i.encode("utf-8")) + 8 for i in ids)
    payload_start = _HEADER.size + index_size
    record_bytes = 4 * dim
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, len(ids)))
        offset = payload_start
        for image_id in ids:
            raw = image_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", offset))
            offset += record_bytes
        for image_id in ids:
            vec = np.asarray(embeddings[image_id], dtype=np.float32).reshape(-1)
            if vec.shape[0] != dim:
                raise DataError(
                    f"embedding for {image_id!r} has length {vec.shape[0]}, "
                    f"store dim is {dim}")
            fh.write(vec.tobytes(order="C"))


class EmbeddingStore:
    """Random-access reader over a store file.

    Safe for concurrent readers: each ``get`` serializes its seek+read pair.
    Use as a context manager or call ``close``.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            raise DataError(f"embedding store not found: {self.path}")
        self._fh = open(self.path, "rb")
        self._lock = threading.Lock()
        header = self._fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DataError(f"{self.path}: truncated header")
        magic, version, dim, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DataError(f"{self.path}: bad magic {magic!r}")
        if version != VERSION:
            raise DataError(f"{self.path}: unsupported format version {version}")
        self.dim = int(dim)
        self.count = int(count)
        self._offsets: dict[str, int] = {}
        self._order: list[str] = []
        for _ in range(self.count):
            raw_len = self._fh.read(2)
            if len(raw_len) < 2:
                raise DataError(f"{self.path}: truncated index")
            (id_len,) = struct.unpack("<H", raw_len)
            raw_id = self._fh.read(id_len)
            raw_off = self._fh.read(8)
            if len(raw_id) < id_len or len(raw_off) < 8:
                raise DataError(f"{self.path}: truncated index")
            image_id = raw_id.decode("utf-8")
            if image_id in self._offsets:
                raise DataError(f"{self.path}: duplicate id {image_id!r} in index")
            (offset,) = struct.unpack("<Q", raw_off)
            self._offsets[image_id] = offset
            self._order.append(image_id)
        file_size = self.path.stat().st_size
        for image_id in self._order:
            if self._offsets[image_id] + 4 * self.dim > file_size:
                raise DataError(
                    f"{self.path}: payload for {image_id!r} extends past end of file")

    def __enter__(self) -> "EmbeddingStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self._fh.close()

    def ids(self) -> list[str]:
        return list(self._order)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._offsets

    def __len__(self) -> int:
        return self.count

    def get_f32(self, image_id: str) -> np.ndarray:
        if image_id not in self._offsets:
            raise DataError(f"unknown image_id {image_id!r} in store {self.path}")
        with self._lock:
            self._fh.seek(self._offsets[image_id])
            raw = self._fh.read(4 * self.dim)
        if len(raw) < 4 * self.dim:
            raise DataError(f"{self.path}: truncated payload for {image_id!r}")
        return np.frombuffer(raw, dtype="<f4").copy()

    def get(self, image_id: str) -> np.ndarray:
        """Embedding widened to float64 (all downstream math is 64-bit)."""
        return self.get_f32(image_id).astype(np.float64)

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        """Stack embeddings for ``ids`` into an (n, dim) float64 matrix."""
        missing = [i for i in ids if i not in self._offsets]
        if missing:
            raise DataError(
                f"store {self.path} is missing {len(missing)} embeddings: "
                + ", ".join(missing[:10]))
        out = np.empty((len(ids), self.dim), dtype=np.float64)
        for row, image_id in enumerate(ids):
            out[row] = self.get(image_id)
        return out

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for image_id in self._order:
            yield image_id, self.get(image_id)


def open_embedding_store(path: str | Path, expected_dim: int | None = None,
                         manifest_ids: Sequence[str] | None = None) -> EmbeddingStore:
    """Open a store, optionally checking its dim and id coverage."""
    store = EmbeddingStore(path)
    if expected_dim is not None and store.dim != expected_dim:
        store.close()
        raise DataError(
            f"store {path} has embedding_dim {store.dim}, expected {expected_dim}")
    if manifest_ids is not None:
        missing = [i for i in manifest_ids if i not in store]
        if missing:
            store.close()
            raise DataError(
                f"store {path} is missing {len(missing)} manifest ids: "
                + ", ".join(missing[:10]))
    return store


@dataclass
class StoreReport:
    path: str
    ok: bool
    count: int = 0
    dim: int = 0
    problems: list[str] = field(default_factory=list)

    def summary(self) -> str:
        if self.ok:
            return f"OK, count={self.count}, dim={self.dim}"
        return "\n".join(f"ERROR: {p}" for p in self.problems)


def verify_store(path: str | Path) -> StoreReport:
    """Structural and finiteness checks, reporting byte offsets on failure.

    Used by the ``extract-check`` CLI command to validate stores produced by
    external feature extractors.
    """
    path = Path(path)
    report = StoreReport(path=str(path), ok=False)
    if not path.exists():
        report.problems.append(f"file not found: {path}")
        return report
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        report.problems.append(f"file too short for header ({len(blob)} bytes, "
                               f"need {_HEADER.size})")
        return report
    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        report.problems.append(f"bad magic {magic!r} at offset 0")
        return report
    if version != VERSION:
        report.problems.append(f"unsupported version {version} at offset 4")
        return report
    if dim < 1:
        report.problems.append(f"embedding_dim {dim} at offset 8 must be >= 1")
        return report
    report.dim = int(dim)
    report.count = int(count)
    pos = _HEADER.size
    entries: list[tuple[str, int]] = []
    seen: set[str] = set()
    for i in range(count):
        if pos + 2 > len(blob):
            report.problems.append(f"index entry {i} truncated at offset {pos}")
            return report
        (id_len,) = struct.unpack_from("<H", blob, pos)
        if pos + 2 + id_len + 8 > len(blob):
            report.problems.append(f"index entry {i} truncated at offset {pos}")
            return report
        try:
            image_id = blob[pos + 2:pos + 2 + id_len].decode("utf-8")
        except UnicodeDecodeError:
            report.problems.append(f"index entry {i}: invalid UTF-8 id at offset {pos + 2}")
            return report
        (offset,) = struct.unpack_from("<Q", blob, pos + 2 + id_len)
        if image_id in seen:
            report.problems.append(f"duplicate id {image_id!r} at offset {pos}")
            return report
        seen.add(image_id)
        entries.append((image_id, offset))
        pos += 2 + id_len + 8
    payload_start = pos
    record_bytes = 4 * report.dim
    expected_size = payload_start + record_bytes * report.count
    if len(blob) != expected_size:
        report.problems.append(
            f"file size {len(blob)} != expected {expected_size} "
            f"(payloads start at offset {payload_start})")
        return report
    for i, (image_id, offset) in enumerate(entries):
        expected_offset = payload_start + i * record_bytes
        if offset != expected_offset:
            report.problems.append(
                f"payload offset for {image_id!r} is {offset}, expected {expected_offset}")
            return report
        vec = np.frombuffer(blob, dtype="<f4", count=report.dim, offset=offset)
        if not np.all(np.isfinite(vec)):
            report.problems.append(
                f"non-finite values in payload for {image_id!r} at offset {offset}")
            return report
    report.ok = True
    return report
