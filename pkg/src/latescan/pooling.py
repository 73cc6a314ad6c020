"""Training-free spatial pooling of patch embeddings.

Compresses a page's token matrix into compact multi-vector summaries by
exploiting the spatial structure of the grid, one kernel per layout
family:

* tile grids   -> one mean vector per tile group
* fixed grids  -> one mean vector per grid row, optionally convolved
  with a uniform sliding window that extends past the boundaries
* merged grids -> row means, optionally smoothed with a same-length
  Gaussian/triangular kernel, then adaptively binned down to at most
  ``T`` rows (short pages are never upsampled)

All kernels are plain weighted means: weights are non-negative and
normalized, so every output vector lies in the convex hull of its
inputs, and constant input maps to constant output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import FixedGrid, MergedGrid, ModelProfile, PatchEmbeddingSet, TileGrid

SMOOTH_KINDS = ("gaussian", "triangular")
_SMOOTH_ALIASES = {"gauss": "gaussian", "tri": "triangular"}


class PoolingError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingKernel:
    """Symmetric distance-decay weights over a window of ``k`` rows.

    Gaussian:   w(delta) = exp(-delta^2 / (2 sigma^2)), sigma defaults
                to max(0.5, r/2)
    Triangular: w(delta) = (r + 1) - delta
    """

    kind: str
    k: int = 3
    sigma: float | None = None

    def __post_init__(self) -> None:
        kind = _SMOOTH_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in SMOOTH_KINDS:
            raise PoolingError(f"unknown smoothing kind {self.kind!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise PoolingError(f"window k must be odd and >= 1, got {self.k}")
        if self.sigma is not None and self.sigma <= 0:
            raise PoolingError(f"sigma must be > 0, got {self.sigma}")

    @property
    def radius(self) -> int:
        return (self.k - 1) // 2

    @property
    def effective_sigma(self) -> float:
        return self.sigma if self.sigma is not None else max(0.5, self.radius / 2)

    def offset_weights(self) -> np.ndarray:
        """Weights indexed by |j - i| = 0..r (float64)."""
        deltas = np.arange(self.radius + 1, dtype=np.float64)
        if self.kind == "gaussian":
            s = self.effective_sigma
            return np.exp(-(deltas**2) / (2.0 * s * s))
        return (self.radius + 1) - deltas

    def window_weights(self) -> np.ndarray:
        """Full symmetric window [w_r .. w_0 .. w_r], length k."""
        half = self.offset_weights()
        return np.concatenate([half[:0:-1], half])


@dataclass(frozen=True)
class PooledSet:
    """Output of a pooling kernel: count x d vectors plus provenance."""

    vectors: np.ndarray
    source_strategy: str
    renormalized: bool = False

    def __post_init__(self) -> None:
        vecs = np.ascontiguousarray(self.vectors, dtype=np.float32)
        object.__setattr__(self, "vectors", vecs)
        if vecs.ndim != 2 or vecs.shape[0] < 1:
            raise PoolingError(f"pooled set must be a non-empty 2D matrix, got shape {vecs.shape}")
        if self.renormalized:
            norms = np.linalg.norm(vecs.astype(np.float64), axis=1)
            off = norms[(norms != 0) & (np.abs(norms - 1.0) > 1e-4)]
            if off.size:
                raise PoolingError(f"renormalized set has {off.size} rows with norm off unit")

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])


@dataclass(frozen=True)
class PoolingOptions:
    """Per-index pooling configuration.

    ``smooth`` selects the optional smoothed variant: ``conv1d`` for
    fixed grids, ``gauss``/``tri`` for merged grids, None to skip.
    """

    smooth: str | None = None
    window: int = 3
    sigma: float | None = None
    max_rows: int | None = None
    renormalize: bool = True

    def __post_init__(self) -> None:
        if self.smooth is not None and self.smooth not in ("conv1d", "gauss", "tri"):
            raise PoolingError(f"unknown smoothing strategy {self.smooth!r}")
        if self.window < 1 or self.window % 2 == 0:
            raise PoolingError(f"window must be odd and >= 1, got {self.window}")
        if self.max_rows is not None and self.max_rows < 1:
            raise PoolingError(f"max_rows must be >= 1, got {self.max_rows}")


def l2_normalize_rows(mat: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; exact-zero rows pass through."""
    mat = np.asarray(mat, dtype=np.float32)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return np.divide(mat, norms, out=mat.copy(), where=norms != 0)


def tile_mean_pool(embedding_set: PatchEmbeddingSet) -> PooledSet:
    """One mean vector per tile group (global tile, if any, comes last)."""
    layout = embedding_set.layout
    if not isinstance(layout, TileGrid):
        raise PoolingError(f"tile_mean_pool needs a TileGrid layout, got {layout}")
    grouped = embedding_set.vectors.reshape(layout.n_tiles, layout.patches_per_tile, -1)
    return PooledSet(grouped.mean(axis=1), "tile_mean")


def row_mean_pool(embedding_set: PatchEmbeddingSet) -> PooledSet:
    """One mean vector per grid row (mean across the W columns)."""
    layout = embedding_set.layout
    if not isinstance(layout, FixedGrid):
        raise PoolingError(f"row_mean_pool needs a FixedGrid layout, got {layout}")
    grid = embedding_set.vectors.reshape(layout.height, layout.width, -1)
    return PooledSet(grid.mean(axis=1), "row_mean")


def conv1d_extend(rows: np.ndarray, k: int = 3) -> np.ndarray:
    """Uniform sliding window with boundary extension: N rows -> N + 2r.

    Output i averages the input rows within radius r of center i - r;
    windows hanging over either edge simply average fewer rows.
    """
    rows = np.asarray(rows, dtype=np.float32)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise PoolingError(f"conv1d_extend needs a non-empty 2D matrix, got shape {rows.shape}")
    if k < 1 or k % 2 == 0:
        raise PoolingError(f"window k must be odd and >= 1, got {k}")
    n = rows.shape[0]
    r = (k - 1) // 2
    out = np.empty((n + 2 * r, rows.shape[1]), dtype=np.float32)
    for i in range(n + 2 * r):
        center = i - r
        lo = max(0, center - r)
        hi = min(n, center + r + 1)
        out[i] = rows[lo:hi].mean(axis=0)
    return out


def weighted_smooth(rows: np.ndarray, kernel: SmoothingKernel) -> np.ndarray:
    """Same-length weighted smoothing; out-of-range neighbors are
    skipped and the remaining weights renormalized per position."""
    rows = np.asarray(rows, dtype=np.float32)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise PoolingError(f"weighted_smooth needs a non-empty 2D matrix, got shape {rows.shape}")
    n = rows.shape[0]
    w = kernel.offset_weights()
    acc = rows.astype(np.float64) * w[0]
    z = np.full(n, w[0])
    for delta in range(1, kernel.radius + 1):
        if delta >= n:
            break
        acc[delta:] += w[delta] * rows[:-delta]  # neighbor j = i - delta
        z[delta:] += w[delta]
        acc[:-delta] += w[delta] * rows[delta:]  # neighbor j = i + delta
        z[:-delta] += w[delta]
    return (acc / z[:, None]).astype(np.float32)


def _merged_row_means(embedding_set: PatchEmbeddingSet) -> np.ndarray:
    layout = embedding_set.layout
    if not isinstance(layout, MergedGrid):
        raise PoolingError(f"expected a MergedGrid layout, got {layout}")
    grid = embedding_set.vectors.reshape(layout.h_eff, layout.w_eff, -1)
    return grid.mean(axis=1)


def _bin_rows(rows: np.ndarray, max_rows: int) -> np.ndarray:
    """Evenly-spaced bins down to at most ``max_rows``; never upsamples."""
    n = rows.shape[0]
    if n <= max_rows:
        return rows
    edges = [(b * n) // max_rows for b in range(max_rows + 1)]
    return np.stack([rows[edges[b] : edges[b + 1]].mean(axis=0) for b in range(max_rows)])


def adaptive_row_pool(embedding_set: PatchEmbeddingSet, max_rows: int = 32) -> PooledSet:
    """Column means per merged-grid row, binned down to ``max_rows``."""
    if max_rows < 1:
        raise PoolingError(f"max_rows must be >= 1, got {max_rows}")
    pooled = _bin_rows(_merged_row_means(embedding_set), max_rows)
    return PooledSet(pooled, "adaptive")


def global_pool(embedding_set: PatchEmbeddingSet, normalize: bool = True) -> np.ndarray:
    """Mean of all visual tokens, L2-normalized unless disabled."""
    mean = embedding_set.vectors.mean(axis=0)
    if normalize:
        norm = float(np.linalg.norm(mean))
        if norm > 0:
            mean = mean / norm
    return mean.astype(np.float32)


def pool_page(
    embedding_set: PatchEmbeddingSet,
    profile: ModelProfile,
    options: PoolingOptions | None = None,
) -> dict[str, np.ndarray]:
    """Build every named vector for one hygiene-clean page.

    Always emits ``initial`` and ``global_pooling``; ``mean_pooling``
    comes from the layout family's kernel; ``smoothed`` only when
    requested via ``options.smooth``.
    """
    options = options or PoolingOptions()
    layout = embedding_set.layout
    if layout.family != profile.layout_family:
        raise PoolingError(
            f"page {embedding_set.page_id!r}: layout {layout.family} does not match "
            f"profile {profile.name!r} ({profile.layout_family})"
        )

    named: dict[str, np.ndarray] = {"initial": embedding_set.vectors}
    smoothed: np.ndarray | None = None

    if isinstance(layout, TileGrid):
        if options.smooth is not None:
            raise PoolingError(f"smoothing {options.smooth!r} is not defined for tile grids")
        pooled = tile_mean_pool(embedding_set).vectors
    elif isinstance(layout, FixedGrid):
        pooled = row_mean_pool(embedding_set).vectors
        if options.smooth == "conv1d":
            smoothed = conv1d_extend(pooled, options.window)
        elif options.smooth is not None:
            raise PoolingError("fixed grids use 'conv1d' smoothing; 'gauss'/'tri' apply to merged grids")
    else:
        max_rows = options.max_rows or profile.max_pooled_rows
        row_means = _merged_row_means(embedding_set)
        pooled = _bin_rows(row_means, max_rows)
        if options.smooth in ("gauss", "tri"):
            kernel = SmoothingKernel(options.smooth, k=options.window, sigma=options.sigma)
            smoothed = _bin_rows(weighted_smooth(row_means, kernel), max_rows)
        elif options.smooth is not None:
            raise PoolingError("merged grids use 'gauss'/'tri' smoothing; 'conv1d' applies to fixed grids")

    global_vec = global_pool(embedding_set, normalize=options.renormalize)
    if options.renormalize:
        pooled = l2_normalize_rows(pooled)
        if smoothed is not None:
            smoothed = l2_normalize_rows(smoothed)

    named["mean_pooling"] = pooled
    if smoothed is not None:
        named["smoothed"] = smoothed
    named["global_pooling"] = global_vec[None, :]
    return named
