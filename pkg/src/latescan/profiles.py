"""Built-in model profiles.

Hygiene counts (prefix/suffix non-visual tokens) are configurable
defaults, not gospel: verify them against the actual preprocessor of
the encoder you export embeddings from before indexing real data.
"""

from __future__ import annotations

from .types import ModelProfile

BUILTIN_PROFILES: dict[str, ModelProfile] = {
    # 32x32 fixed patch grid, 1024 visual of 1030 total tokens; the 6
    # prompt/special tokens are assumed to lead the sequence.
    "colpali": ModelProfile(
        name="colpali",
        d=128,
        layout_family="fixed_grid",
        prefix_nonvisual=6,
        suffix_nonvisual=0,
        default_pooling="row_mean",
        max_pooled_rows=32,
    ),
    # Tiling processor: n_rows x n_cols tiles of 64 patches each plus a
    # trailing global tile (typically 12 + 1 = 13 tiles, ~832 tokens).
    "colsmol": ModelProfile(
        name="colsmol",
        d=128,
        layout_family="tile_grid",
        prefix_nonvisual=0,
        suffix_nonvisual=0,
        default_pooling="tile_mean",
        max_pooled_rows=32,
    ),
    # Dynamic-resolution backbone with learned 2x2 patch merging; grids
    # vary per page, rows are adaptively downsampled to at most 32.
    "colqwen": ModelProfile(
        name="colqwen",
        d=128,
        layout_family="merged_grid",
        prefix_nonvisual=0,
        suffix_nonvisual=0,
        default_pooling="adaptive",
        max_pooled_rows=32,
    ),
}


def get_profile(name: str) -> ModelProfile:
    try:
        return BUILTIN_PROFILES[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_PROFILES))
        raise KeyError(f"unknown profile {name!r} (built-in: {known})") from None
