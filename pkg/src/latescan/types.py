"""Core domain types shared by every stage of the engine.

A page is represented as a stack of patch-token embeddings plus a small
amount of spatial layout metadata. The layout tells the pooling kernels
how the token sequence maps onto the 2D page:

* ``FixedGrid``  - H x W patch grid, row-major token order.
* ``TileGrid``   - groups of P consecutive tokens per tile, optional
  trailing global tile covering the whole page.
* ``MergedGrid`` - h_eff x w_eff grid after a learned 2x2 spatial merge,
  row-major token order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

VECTOR_NAMES = ("initial", "mean_pooling", "smoothed", "global_pooling")

LAYOUT_FAMILIES = ("fixed_grid", "tile_grid", "merged_grid")


class EngineError(Exception):
    """Base class for errors raised by this package."""


class LayoutError(EngineError):
    """Token count is inconsistent with the declared spatial layout."""


class FormatError(EngineError):
    """Malformed embedding bundle or index file."""


class HygieneError(EngineError):
    """Non-visual token stripping produced an unusable page."""


@dataclass(frozen=True)
class FixedGrid:
    """Fixed H x W patch grid (e.g. 32 x 32 -> 1024 tokens)."""

    height: int
    width: int

    family = "fixed_grid"

    @property
    def expected_count(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class TileGrid:
    """Grid of tiles, each contributing ``patches_per_tile`` consecutive tokens.

    When ``has_global_tile`` is set, one extra tile (a squeezed whole-page
    view) is appended after the positional tiles.
    """

    n_rows: int
    n_cols: int
    patches_per_tile: int
    has_global_tile: bool = True

    family = "tile_grid"

    @property
    def n_tiles(self) -> int:
        return self.n_rows * self.n_cols + (1 if self.has_global_tile else 0)

    @property
    def expected_count(self) -> int:
        return self.n_tiles * self.patches_per_tile


@dataclass(frozen=True)
class MergedGrid:
    """Effective h_eff x w_eff grid after learned 2x2 token merging."""

    h_eff: int
    w_eff: int

    family = "merged_grid"

    @property
    def expected_count(self) -> int:
        return self.h_eff * self.w_eff


GridLayout = Union[FixedGrid, TileGrid, MergedGrid]


def check_layout(layout: GridLayout, count: int) -> str | None:
    """Check that ``count`` vectors are consistent with ``layout``.

    Returns None when consistent, otherwise a human-readable description
    of the violation. Total function: never raises.
    """
    expected = layout.expected_count
    if expected == count:
        return None
    return f"{layout} expects {expected} vectors, got {count}"


@dataclass(frozen=True)
class PatchEmbeddingSet:
    """A page's visual-token matrix (D x d, float32) plus its layout.

    Construction validates the layout-consistency invariant; an
    inconsistent set never exists.
    """

    vectors: np.ndarray
    layout: GridLayout
    page_id: str
    dataset_id: str = ""

    def __post_init__(self) -> None:
        vecs = np.ascontiguousarray(self.vectors, dtype=np.float32)
        object.__setattr__(self, "vectors", vecs)
        if vecs.ndim != 2 or vecs.shape[0] < 1:
            raise LayoutError(f"page {self.page_id!r}: expected non-empty 2D matrix, got shape {vecs.shape}")
        violation = check_layout(self.layout, vecs.shape[0])
        if violation is not None:
            raise LayoutError(f"page {self.page_id!r}: {violation}")
        if not np.isfinite(vecs).all():
            raise LayoutError(f"page {self.page_id!r}: non-finite embedding components")

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def validate_layout(embedding_set: PatchEmbeddingSet) -> str | None:
    """Re-check the layout invariant on an existing set (None = ok)."""
    return check_layout(embedding_set.layout, embedding_set.count)


@dataclass(frozen=True)
class RawModelOutput:
    """One page as emitted by an encoder, before token hygiene.

    ``vectors`` holds all T_total tokens, visual and non-visual alike.
    ``layout`` declares the grid the *visual* tokens form once stripped.
    ``visual_mask``, when present, marks visual tokens explicitly and
    takes precedence over count-based stripping heuristics.
    """

    page_id: str
    dataset_id: str
    vectors: np.ndarray
    layout: GridLayout
    visual_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        vecs = np.ascontiguousarray(self.vectors, dtype=np.float32)
        object.__setattr__(self, "vectors", vecs)
        if vecs.ndim != 2 or vecs.shape[0] < 1:
            raise FormatError(f"page {self.page_id!r}: raw output must be a non-empty 2D matrix")
        if self.visual_mask is not None:
            mask = np.asarray(self.visual_mask, dtype=bool)
            object.__setattr__(self, "visual_mask", mask)
            if mask.shape != (vecs.shape[0],):
                raise FormatError(
                    f"page {self.page_id!r}: visual_mask length {mask.shape[0]} != T_total {vecs.shape[0]}"
                )

    @property
    def t_total(self) -> int:
        return int(self.vectors.shape[0])


@dataclass(frozen=True)
class ModelProfile:
    """Per-backbone rules: dimensionality, layout family, hygiene counts.

    ``prefix_nonvisual`` / ``suffix_nonvisual`` describe where the
    non-visual (special / prompt) tokens sit when no explicit visual
    mask is available. The shipped profiles are sensible defaults;
    verify them against the actual preprocessor of your encoder.
    """

    name: str
    d: int
    layout_family: str
    prefix_nonvisual: int = 0
    suffix_nonvisual: int = 0
    default_pooling: str = "row_mean"
    max_pooled_rows: int = 32

    def __post_init__(self) -> None:
        if self.layout_family not in LAYOUT_FAMILIES:
            raise ValueError(f"unknown layout family {self.layout_family!r}")
        if self.d < 1 or self.prefix_nonvisual < 0 or self.suffix_nonvisual < 0 or self.max_pooled_rows < 1:
            raise ValueError(f"invalid profile {self.name!r}")


@dataclass
class PageRecord:
    """A stored page: identifiers plus named FP16 vector matrices.

    ``initial`` is always present. ``global_pooling`` holds a single
    vector; ``mean_pooling`` never holds more vectors than ``initial``.
    """

    page_id: str
    dataset_id: str
    named_vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if "initial" not in self.named_vectors:
            raise ValueError(f"record {self.page_id!r}: missing required vector 'initial'")
        for name, mat in self.named_vectors.items():
            if name not in VECTOR_NAMES:
                raise ValueError(f"record {self.page_id!r}: unknown vector name {name!r}")
            mat = np.ascontiguousarray(mat, dtype=np.float16)
            self.named_vectors[name] = mat
            if mat.ndim != 2 or mat.shape[0] < 1:
                raise ValueError(f"record {self.page_id!r}: vector {name!r} must be a non-empty 2D matrix")
        initial_count = self.named_vectors["initial"].shape[0]
        global_mat = self.named_vectors.get("global_pooling")
        if global_mat is not None and global_mat.shape[0] != 1:
            raise ValueError(f"record {self.page_id!r}: global_pooling must hold exactly 1 vector")
        mean_mat = self.named_vectors.get("mean_pooling")
        if mean_mat is not None and mean_mat.shape[0] > initial_count:
            raise ValueError(f"record {self.page_id!r}: mean_pooling larger than initial")
