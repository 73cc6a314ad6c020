"""Empty-region cropping for page images.

Blank margins, headers, and page numbers waste encoder capacity (and,
for dynamic-resolution models, inflate the stored vector count). Rows
and columns whose pixel standard deviation stays at or below a
threshold are treated as empty; the crop is the minimal bounding box of
the remaining content. A configurable bottom strip catches lone page
numbers so they do not anchor the box to the page edge.

Images are 2D luma matrices in [0, 255]. RGB input is converted with
the standard 0.299 / 0.587 / 0.114 weights. File I/O is binary PGM
(P5); anything fancier is an external conversion concern.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .types import FormatError

# A strip whose content columns span less than this fraction of the
# width is considered "just a page number" and excluded from the box.
_STRIP_CONTENT_SPAN = 0.10

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class CropConfig:
    row_std_thresh: float = 4.0
    col_std_thresh: float = 4.0
    min_keep_fraction: float = 0.1
    page_number_strip_fraction: float = 0.06
    strip_enabled: bool = False

    def __post_init__(self) -> None:
        if self.row_std_thresh < 0 or self.col_std_thresh < 0:
            raise ValueError("std thresholds must be >= 0")
        if not 0 < self.min_keep_fraction <= 1:
            raise ValueError("min_keep_fraction must be in (0, 1]")
        if not 0 <= self.page_number_strip_fraction <= 0.2:
            raise ValueError("page_number_strip_fraction must be in [0, 0.2]")


@dataclass(frozen=True)
class CropRect:
    """Half-open pixel box [top, bottom) x [left, right)."""

    top: int
    bottom: int
    left: int
    right: int

    def __post_init__(self) -> None:
        if not (0 <= self.top < self.bottom and 0 <= self.left < self.right):
            raise ValueError(f"degenerate crop rect {self}")

    def as_dict(self) -> dict[str, int]:
        return {"top": self.top, "bottom": self.bottom, "left": self.left, "right": self.right}


def luma_from_rgb(rgb: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, 3) RGB array to (H, W) luma."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB array, got shape {rgb.shape}")
    w = np.asarray(LUMA_WEIGHTS, dtype=np.float64)
    return (rgb.astype(np.float64) @ w).astype(np.float32)


def _as_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = luma_from_rgb(arr)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected non-empty 2D luma image, got shape {arr.shape}")
    return arr.astype(np.float32, copy=False)


def row_col_std(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Population standard deviation per row and per column."""
    arr = _as_image(img).astype(np.float64)
    return arr.std(axis=1), arr.std(axis=0)


def _strip_height(img: np.ndarray, cfg: CropConfig) -> int:
    """Rows to exclude at the bottom, 0 if the strip holds real content."""
    h, w = img.shape
    strip_h = math.ceil(cfg.page_number_strip_fraction * h)
    if strip_h == 0 or strip_h >= h:
        return 0
    strip = img[h - strip_h :].astype(np.float64)
    content_cols = np.flatnonzero(strip.std(axis=0) > cfg.col_std_thresh)
    if content_cols.size == 0:
        return strip_h
    span = (content_cols[-1] - content_cols[0] + 1) / w
    return strip_h if span < _STRIP_CONTENT_SPAN else 0


def crop_empty_regions(img: np.ndarray, cfg: CropConfig | None = None) -> tuple[CropRect, np.ndarray]:
    """Crop low-variance borders; returns (rect, cropped image).

    Falls back to the identity crop (full image) whenever no row or
    column clears its threshold, or the surviving box would cover less
    than ``min_keep_fraction`` of either dimension: the pipeline never
    receives an empty image.
    """
    cfg = cfg or CropConfig()
    arr = _as_image(img)
    h, w = arr.shape
    full = CropRect(0, h, 0, w)

    strip_h = _strip_height(arr, cfg) if cfg.strip_enabled else 0
    body = arr[: h - strip_h]

    row_stds, col_stds = row_col_std(body)
    rows = np.flatnonzero(row_stds > cfg.row_std_thresh)
    cols = np.flatnonzero(col_stds > cfg.col_std_thresh)
    if rows.size == 0 or cols.size == 0:
        return full, arr

    rect = CropRect(int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1)
    if (rect.bottom - rect.top) < cfg.min_keep_fraction * h or (rect.right - rect.left) < cfg.min_keep_fraction * w:
        return full, arr
    return rect, arr[rect.top : rect.bottom, rect.left : rect.right]


# --- PGM (P5) I/O ---------------------------------------------------------

_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def read_pgm(path: str) -> np.ndarray:
    """Read a binary PGM (P5) image as a float32 luma matrix."""
    with open(path, "rb") as fh:
        data = fh.read()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: unsupported PGM maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=m.end())
    if pixels.size < width * height:
        raise FormatError(f"{path}: truncated PGM payload ({pixels.size} of {width * height} pixels)")
    img = pixels[: width * height].reshape(height, width).astype(np.float32)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def write_pgm(path: str, img: np.ndarray) -> None:
    arr = _as_image(img)
    pixels = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
