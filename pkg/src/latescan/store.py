"""In-memory page collections with FP16 named-vector storage.

Collections are build-then-freeze: all inserts happen before any
search, there are no updates or deletes, and iteration order is
insertion order (which fixes tie-breaking downstream). Vectors are
stored half-precision and widened to float32 at scoring time; no ANN
structure of any kind is built, scans are exhaustive.

Index file (LIX), little-endian:

    header: magic "LIX1" | version u32 (=1) | d u32 | page_count u64
    page:   id_len u32 | id bytes | dataset_len u32 | dataset bytes
            named_vector_count u8
            per vector: name_len u8 | name bytes | count u32 | count*d f16
"""

from __future__ import annotations

import struct
from collections.abc import Iterator, Sequence

import numpy as np

from .types import FormatError, PageRecord

MAGIC = b"LIX1"
VERSION = 1


class StoreError(ValueError):
    pass


class Collection:
    """Ordered set of PageRecords sharing one embedding dimension."""

    def __init__(self, d: int, name: str = ""):
        if d < 1:
            raise StoreError(f"embedding dim must be >= 1, got {d}")
        self.d = d
        self.name = name
        self._records: list[PageRecord] = []
        self._by_id: dict[str, PageRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[PageRecord]:
        return iter(self._records)

    @property
    def records(self) -> list[PageRecord]:
        return list(self._records)

    def get(self, page_id: str) -> PageRecord:
        try:
            return self._by_id[page_id]
        except KeyError:
            raise StoreError(f"unknown page id {page_id!r} in collection {self.name!r}") from None

    def __contains__(self, page_id: str) -> bool:
        return page_id in self._by_id

    def insert(self, record: PageRecord) -> None:
        """Append a record; matrices are stored as FP16 (round-to-nearest-even)."""
        if record.page_id in self._by_id:
            raise StoreError(f"duplicate page id {record.page_id!r}")
        for name, mat in record.named_vectors.items():
            if mat.shape[1] != self.d:
                raise StoreError(
                    f"page {record.page_id!r}: vector {name!r} has d={mat.shape[1]}, collection d={self.d}"
                )
        self._records.append(record)
        self._by_id[record.page_id] = record

    def vector_names(self) -> dict[str, int]:
        """Map of vector name -> number of records carrying it."""
        counts: dict[str, int] = {}
        for rec in self._records:
            for name in rec.named_vectors:
                counts[name] = counts.get(name, 0) + 1
        return counts


def merge_with_mapping(
    collections: Sequence[Collection], name: str | None = None
) -> tuple[Collection, dict[tuple[str, str], str]]:
    """Merge collections; colliding page ids get a ``dataset_id/`` prefix.

    Returns the merged collection and a map from (dataset_id, original
    page_id) to the id the merged collection uses.
    """
    if not collections:
        raise StoreError("nothing to merge")
    d = collections[0].d
    for col in collections[1:]:
        if col.d != d:
            raise StoreError(f"dim mismatch in merge: {col.d} != {d}")

    seen: dict[str, int] = {}
    for col in collections:
        for rec in col:
            seen[rec.page_id] = seen.get(rec.page_id, 0) + 1

    merged = Collection(d, name if name is not None else "+".join(c.name for c in collections))
    mapping: dict[tuple[str, str], str] = {}
    for col in collections:
        for rec in col:
            new_id = rec.page_id if seen[rec.page_id] == 1 else f"{rec.dataset_id}/{rec.page_id}"
            mapping[(rec.dataset_id, rec.page_id)] = new_id
            if new_id == rec.page_id:
                merged.insert(rec)
            else:
                merged.insert(PageRecord(new_id, rec.dataset_id, dict(rec.named_vectors)))
    return merged, mapping


def merge(collections: Sequence[Collection], name: str | None = None) -> Collection:
    return merge_with_mapping(collections, name)[0]


def save_index(col: Collection, path: str) -> None:
    chunks = [MAGIC, struct.pack("<IIQ", VERSION, col.d, len(col))]
    for rec in col:
        pid = rec.page_id.encode("utf-8")
        dsid = rec.dataset_id.encode("utf-8")
        chunks.append(struct.pack("<I", len(pid)) + pid)
        chunks.append(struct.pack("<I", len(dsid)) + dsid)
        chunks.append(struct.pack("<B", len(rec.named_vectors)))
        for name, mat in rec.named_vectors.items():
            raw = name.encode("utf-8")
            chunks.append(struct.pack("<B", len(raw)) + raw)
            chunks.append(struct.pack("<I", mat.shape[0]))
            chunks.append(np.ascontiguousarray(mat, dtype="<f2").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_index(path: str, name: str | None = None) -> Collection:
    with open(path, "rb") as fh:
        data = fh.read()

    def fail(msg: str, off: int) -> FormatError:
        return FormatError(f"{path}: {msg} at byte {off}")

    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise fail(f"truncated payload reading {what}", off)
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise fail(f"bad magic {data[:4]!r}", 0)
    version, d, page_count = struct.unpack("<IIQ", take(16, "header"))
    if version != VERSION:
        raise fail(f"unsupported index version {version}", 4)

    col = Collection(d, name if name is not None else path)
    for _ in range(page_count):
        (id_len,) = struct.unpack("<I", take(4, "id length"))
        page_id = take(id_len, "page id").decode("utf-8")
        (ds_len,) = struct.unpack("<I", take(4, "dataset length"))
        dataset_id = take(ds_len, "dataset id").decode("utf-8")
        (n_vectors,) = struct.unpack("<B", take(1, "vector count"))
        named: dict[str, np.ndarray] = {}
        for _ in range(n_vectors):
            (name_len,) = struct.unpack("<B", take(1, "name length"))
            vec_name = take(name_len, "vector name").decode("utf-8")
            (count,) = struct.unpack("<I", take(4, "vector count"))
            raw = take(count * d * 2, f"{vec_name} payload")
            named[vec_name] = np.frombuffer(raw, dtype="<f2").reshape(count, d)
        col.insert(PageRecord(page_id, dataset_id, named))

    if off != len(data):
        raise fail(f"{len(data) - off} trailing bytes after last page", off)
    return col
