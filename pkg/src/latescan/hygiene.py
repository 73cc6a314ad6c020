"""Token hygiene: strip special, prompt, and padding tokens at index time.

Encoders emit non-visual tokens alongside the visual patch tokens.
Scoring them lets spurious high-similarity attractors inflate MaxSim,
so only visual tokens should ever reach the index. Two paths:

* mask path - the raw output carries an explicit visual mask; rows
  marked visual are selected (order preserved, gaps allowed).
* heuristic path - drop ``prefix_nonvisual`` leading rows, then
  ``suffix_nonvisual`` trailing rows, then any trailing batch-padding
  rows (detected as exact-zero vectors).

The explicit mask wins when both are available.
"""

from __future__ import annotations

import numpy as np

from .types import HygieneError, ModelProfile, PatchEmbeddingSet, RawModelOutput, check_layout


def detect_padding(raw: RawModelOutput) -> int:
    """Length of the maximal trailing run of all-zero token vectors.

    Batch padding produces literal zeros, so the check is exact: no
    epsilon, which could otherwise delete genuine low-norm patches.
    """
    nonzero_rows = np.flatnonzero((raw.vectors != 0.0).any(axis=1))
    if nonzero_rows.size == 0:
        return raw.t_total
    return raw.t_total - int(nonzero_rows[-1]) - 1


def strip_nonvisual(raw: RawModelOutput, profile: ModelProfile) -> PatchEmbeddingSet:
    """Reduce a raw encoder output to its visual tokens.

    The surviving token count must match the page's declared layout;
    anything else aborts indexing for the page with a diagnostic.
    """
    t_total = raw.t_total
    if raw.visual_mask is not None:
        keep = np.flatnonzero(raw.visual_mask)
    else:
        padding = detect_padding(raw)
        start = profile.prefix_nonvisual
        stop = t_total - profile.suffix_nonvisual - padding
        if stop <= start:
            raise HygieneError(
                f"page {raw.page_id!r}: no visual tokens left "
                f"(T_total={t_total}, prefix={profile.prefix_nonvisual}, "
                f"suffix={profile.suffix_nonvisual}, padding={padding})"
            )
        keep = np.arange(start, stop)

    if keep.size == 0:
        raise HygieneError(f"page {raw.page_id!r}: visual mask selects no tokens")

    visual = raw.vectors[keep]
    violation = check_layout(raw.layout, visual.shape[0])
    if violation is not None:
        raise HygieneError(f"page {raw.page_id!r}: after hygiene, {violation}")
    return PatchEmbeddingSet(
        vectors=visual,
        layout=raw.layout,
        page_id=raw.page_id,
        dataset_id=raw.dataset_id,
    )
