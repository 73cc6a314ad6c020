"""LEB embedding-bundle file format.

A LEB file carries patch embeddings together with the metadata the rest
of the pipeline needs (visual masks for hygiene, grid layout for
pooling), which generic array dumps lose. Little-endian throughout:

    header:  magic "LEB1" | version u32 (=1) | d u32 | page_count u64
    page:    id_len u32 | id bytes
             dataset_len u32 | dataset bytes
             layout_tag u8 (0=fixed, 1=tile, 2=merged)
             layout ints, u32 each:
                 fixed  -> H, W
                 tile   -> n_rows, n_cols, patches_per_tile, has_global (0/1)
                 merged -> h_eff, w_eff
             T_total u32
             mask_present u8 | [T_total mask bytes, 0/1]
             dtype u8 (0=f32, 1=f16) | T_total*d values

Query files reuse the page layout with tag 0 and H=Q, W=1 (a query is a
token sequence, not a grid). Files are read whole; round-trips are
bit-exact for both f32 and f16 payloads.
"""

from __future__ import annotations

import struct
from collections.abc import Sequence

import numpy as np

from .types import FixedGrid, FormatError, GridLayout, MergedGrid, RawModelOutput, TileGrid

MAGIC = b"LEB1"
VERSION = 1

_LAYOUT_TAGS: dict[str, int] = {"fixed_grid": 0, "tile_grid": 1, "merged_grid": 2}


class _Reader:
    """Byte-offset-tracking reader so parse errors can point at the spot."""

    def __init__(self, data: bytes, label: str):
        self.data = data
        self.off = 0
        self.label = label

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError(
                f"{self.label}: truncated payload reading {what} at byte {self.off} "
                f"(need {n}, have {len(self.data) - self.off})"
            )
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def utf8(self, what: str) -> str:
        n = self.u32(f"{what} length")
        return self.take(n, what).decode("utf-8")


def _pack_layout(layout: GridLayout) -> bytes:
    tag = _LAYOUT_TAGS[layout.family]
    if isinstance(layout, FixedGrid):
        ints = (layout.height, layout.width)
    elif isinstance(layout, TileGrid):
        ints = (layout.n_rows, layout.n_cols, layout.patches_per_tile, 1 if layout.has_global_tile else 0)
    elif isinstance(layout, MergedGrid):
        ints = (layout.h_eff, layout.w_eff)
    else:  # pragma: no cover - union is closed
        raise FormatError(f"unsupported layout {layout!r}")
    return struct.pack("<B", tag) + struct.pack(f"<{len(ints)}I", *ints)


def _read_layout(r: _Reader) -> GridLayout:
    tag = r.u8("layout tag")
    if tag == 0:
        h, w = r.u32("grid height"), r.u32("grid width")
        return FixedGrid(h, w)
    if tag == 1:
        n_rows, n_cols = r.u32("tile rows"), r.u32("tile cols")
        per_tile, has_global = r.u32("patches per tile"), r.u32("global tile flag")
        if has_global not in (0, 1):
            raise FormatError(f"{r.label}: bad global tile flag {has_global} before byte {r.off}")
        return TileGrid(n_rows, n_cols, per_tile, bool(has_global))
    if tag == 2:
        h_eff, w_eff = r.u32("merged height"), r.u32("merged width")
        return MergedGrid(h_eff, w_eff)
    raise FormatError(f"{r.label}: unknown layout tag {tag} at byte {r.off - 1}")


def write_embedding_file(
    path: str,
    d: int,
    pages: Sequence[RawModelOutput],
    dtype: str = "f32",
) -> None:
    """Write pages to ``path``. ``dtype`` selects the payload encoding."""
    if dtype not in ("f32", "f16"):
        raise ValueError(f"dtype must be 'f32' or 'f16', got {dtype!r}")
    np_dtype = np.dtype("<f4") if dtype == "f32" else np.dtype("<f2")
    dtype_tag = 0 if dtype == "f32" else 1

    chunks = [MAGIC, struct.pack("<IIQ", VERSION, d, len(pages))]
    for page in pages:
        if page.vectors.shape[1] != d:
            raise FormatError(
                f"page {page.page_id!r}: dim mismatch, file d={d} but vectors have d={page.vectors.shape[1]}"
            )
        pid = page.page_id.encode("utf-8")
        dsid = page.dataset_id.encode("utf-8")
        chunks.append(struct.pack("<I", len(pid)) + pid)
        chunks.append(struct.pack("<I", len(dsid)) + dsid)
        chunks.append(_pack_layout(page.layout))
        chunks.append(struct.pack("<I", page.t_total))
        if page.visual_mask is None:
            chunks.append(b"\x00")
        else:
            chunks.append(b"\x01" + page.visual_mask.astype(np.uint8).tobytes())
        chunks.append(struct.pack("<B", dtype_tag))
        chunks.append(np.ascontiguousarray(page.vectors, dtype=np_dtype).tobytes())

    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_embedding_file(path: str) -> tuple[int, list[RawModelOutput]]:
    """Load all pages from ``path``; returns (d, pages)."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)

    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    d = r.u32("embedding dim")
    if d < 1:
        raise FormatError(f"{path}: dim mismatch, d={d} at byte 8")
    page_count = r.u64("page count")

    pages: list[RawModelOutput] = []
    for _ in range(page_count):
        page_id = r.utf8("page id")
        dataset_id = r.utf8("dataset id")
        layout = _read_layout(r)
        t_total = r.u32("T_total")
        if t_total < 1:
            raise FormatError(f"{path}: page {page_id!r} has T_total=0 before byte {r.off}")
        mask_present = r.u8("mask flag")
        mask: np.ndarray | None = None
        if mask_present == 1:
            mask_off = r.off
            raw = np.frombuffer(r.take(t_total, "visual mask"), dtype=np.uint8)
            if not np.isin(raw, (0, 1)).all():
                raise FormatError(f"{path}: page {page_id!r} mask bytes not 0/1 at byte {mask_off}")
            mask = raw.astype(bool)
        elif mask_present != 0:
            raise FormatError(f"{path}: bad mask flag {mask_present} at byte {r.off - 1}")
        dtype_tag = r.u8("dtype tag")
        if dtype_tag == 0:
            np_dtype, item = np.dtype("<f4"), 4
        elif dtype_tag == 1:
            np_dtype, item = np.dtype("<f2"), 2
        else:
            raise FormatError(f"{path}: unknown dtype tag {dtype_tag} at byte {r.off - 1}")
        values = np.frombuffer(r.take(t_total * d * item, "vector payload"), dtype=np_dtype)
        vectors = values.reshape(t_total, d).astype(np.float32)
        pages.append(RawModelOutput(page_id, dataset_id, vectors, layout, visual_mask=mask))

    if r.off != len(data):
        raise FormatError(f"{path}: {len(data) - r.off} trailing bytes after last page at byte {r.off}")
    return d, pages
