"""Built-in stochastic variation backend and synthetic starter generation.

A desk-scale stand-in for a generative inpainting model: inside the mask it
re-samples per-track segment layouts biased by a rule hint, then emulates
model edge noise by flipping edge-adjacent pixels with a configurable
probability. Pixels outside the mask are never touched.
"""

from __future__ import annotations

import numpy as np

from .drc import MODE_UNIDIRECTIONAL, RuleSet, is_legal
from .errors import PatternForgeError
from .grid import MaskSpec, PatternGrid, Rect


def _interior_zero_runs_ok(col: np.ndarray, min_gap: int, max_gap: int | None) -> bool:
    cuts = np.flatnonzero(np.diff(col.astype(np.int8))) + 1
    bounds = [0, *map(int, cuts), len(col)]
    for i in range(len(bounds) - 1):
        s, e = bounds[i], bounds[i + 1]
        if col[s] == 0 and s > 0 and e < len(col):
            if e - s < min_gap or (max_gap is not None and e - s > max_gap):
                return False
    return True


def _column_ok(col: np.ndarray, rules: RuleSet) -> bool:
    """Per-column legality of vertical runs under the hint rules."""
    pitch = 1  # callers pass pixel-space bounds already scaled by pitch
    del pitch
    if rules.mode == MODE_UNIDIRECTIONAL:
        return _interior_zero_runs_ok(col, rules.e2e_min_space, None)
    if rules.min_space_v and not _interior_zero_runs_ok(col, rules.min_space_v, rules.max_space_v):
        return False
    cuts = np.flatnonzero(np.diff(col.astype(np.int8))) + 1
    bounds = [0, *map(int, cuts), len(col)]
    for i in range(len(bounds) - 1):
        s, e = bounds[i], bounds[i + 1]
        if col[s] == 1:
            border = s == 0 or e == len(col)
            if rules.min_width_v and e - s < rules.min_width_v:
                return False
            if not border and rules.max_width_v and e - s > rules.max_width_v:
                return False
    return True


def _sample_band(rng: np.random.Generator, length: int, min_seg: int, min_gap: int) -> np.ndarray:
    """Random alternating metal/gap profile of the given length."""
    band = np.zeros(length, dtype=np.uint8)
    pos = 0
    value = int(rng.integers(2))
    while pos < length:
        lo = min_seg if value else min_gap
        ln = int(rng.integers(lo, 3 * lo + 1))
        if value:
            band[pos : pos + ln] = 1
        pos += ln
        value ^= 1
    return band


def _hint_params(rules: RuleSet | None, pitch: int) -> tuple[int, int]:
    """(min segment px, min gap px) derived from the rule hint."""
    if rules is None:
        return 4, 6
    min_seg = max(2, -(-(rules.min_width_v or 4 * pitch) // pitch))
    if rules.mode == MODE_UNIDIRECTIONAL:
        min_gap = -(-rules.e2e_min_space // pitch)
    else:
        min_gap = -(-(rules.min_space_v or 6 * pitch) // pitch)
    return min_seg, min_gap


def _find_tracks(pixels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal contiguous column groups containing metal: [(x0, x1), ...]."""
    occupied = pixels.any(axis=0)
    cuts = np.flatnonzero(np.diff(occupied.astype(np.int8))) + 1
    bounds = [0, *map(int, cuts), len(occupied)]
    return [
        (bounds[i], bounds[i + 1])
        for i in range(len(bounds) - 1)
        if occupied[bounds[i]]
    ]


def _regenerate_track_band(
    out: np.ndarray,
    track: tuple[int, int],
    band: tuple[int, int],
    rules: RuleSet | None,
    min_seg: int,
    min_gap: int,
    rng: np.random.Generator,
) -> None:
    """Resample one track's segments inside the band, keeping the column legal.

    Falls back to the previous content when no legal profile is found.
    """
    x0, x1 = track
    y0, y1 = band
    original = out[y0:y1, x0].copy()
    for _ in range(8):
        profile = _sample_band(rng, y1 - y0, min_seg, min_gap)
        out[y0:y1, x0:x1] = profile[:, None]
        if rules is None or _column_ok(out[:, x0], rules):
            return
    out[y0:y1, x0:x1] = original[:, None]


def _edge_adjacent(pixels: np.ndarray) -> np.ndarray:
    """Pixels with at least one differing 4-neighbor inside the grid."""
    edges = np.zeros(pixels.shape, dtype=bool)
    edges[1:, :] |= pixels[1:, :] != pixels[:-1, :]
    edges[:-1, :] |= pixels[:-1, :] != pixels[1:, :]
    edges[:, 1:] |= pixels[:, 1:] != pixels[:, :-1]
    edges[:, :-1] |= pixels[:, :-1] != pixels[:, 1:]
    return edges


def stochastic_vary(
    pattern: PatternGrid,
    mask: MaskSpec,
    n: int,
    seed: int,
    jitter_rate: float = 0.1,
    rules_hint: RuleSet | None = None,
) -> list[PatternGrid]:
    """Generate ``n`` mask-preserving variations of ``pattern``.

    Tracks whose full column span lies inside a mask rect get their segment
    layout re-sampled (legal against ``rules_hint`` when given); everything
    else inside the mask is kept. Edge-adjacent pixels inside the mask are
    then flipped with probability ``jitter_rate``, emulating the edge noise
    of a lossy generative model. Deterministic per (seed, variation index).
    """
    if not 0 <= jitter_rate <= 1:
        raise PatternForgeError(f"jitter_rate must be in [0, 1], got {jitter_rate}")
    inside = mask.to_bool_array(pattern.width, pattern.height)
    min_seg, min_gap = _hint_params(rules_hint, pattern.pitch_nm)
    tracks = _find_tracks(pattern.pixels)
    variations = []
    for index in range(n):
        rng = np.random.default_rng([abs(int(seed)), index])
        out = pattern.pixels.copy()
        for rect in mask.rects:
            for track in tracks:
                if rect.x0 <= track[0] and track[1] <= rect.x1:
                    _regenerate_track_band(
                        out, track, (rect.y0, rect.y1), rules_hint, min_seg, min_gap, rng
                    )
        if jitter_rate > 0:
            candidates = _edge_adjacent(out) & inside
            flips = candidates & (rng.random(out.shape) < jitter_rate)
            out ^= flips.astype(np.uint8)
        variations.append(PatternGrid(out, pattern.pitch_nm))
    return variations


def make_track_pattern(
    width: int,
    height: int,
    rules: RuleSet,
    seed: int,
    pitch_nm: int = 1,
    max_tries: int = 50,
) -> PatternGrid:
    """Synthesize one DR-clean vertical-track pattern under ``rules``."""
    min_seg, min_gap = _hint_params(rules, pitch_nm)
    if rules.discrete_widths_h:
        widths = [w // pitch_nm for w in rules.discrete_widths_h]
    else:
        lo = -(-rules.min_width_h // pitch_nm)
        hi = (rules.max_width_h // pitch_nm) if rules.max_width_h else 2 * lo
        widths = list(range(lo, hi + 1))
    gap_h = -(-(rules.min_space_h or rules.min_width_h) // pitch_nm)
    for attempt in range(max_tries):
        rng = np.random.default_rng([abs(int(seed)), attempt])
        px = np.zeros((height, width), dtype=np.uint8)
        x = int(rng.integers(gap_h, 2 * gap_h + 1))
        while True:
            w = int(rng.choice(widths))
            if x + w + gap_h > width:
                break
            profile = np.zeros(height, dtype=np.uint8)
            while not profile.any():
                profile = _sample_band(rng, height, min_seg, min_gap)
            px[:, x : x + w] = profile[:, None]
            x += w + gap_h + int(rng.integers(0, gap_h + 1))
        grid = PatternGrid(px, pitch_nm)
        if px.any() and is_legal(grid, rules):
            return grid
    raise PatternForgeError(f"could not synthesize a legal pattern in {max_tries} tries")


def make_starters(
    count: int,
    width: int,
    height: int,
    rules: RuleSet,
    seed: int,
    pitch_nm: int = 1,
) -> list[PatternGrid]:
    """Synthesize ``count`` distinct DR-clean starter patterns."""
    starters: list[PatternGrid] = []
    sub = 0
    while len(starters) < count:
        grid = make_track_pattern(width, height, rules, seed * 100003 + sub, pitch_nm)
        sub += 1
        if all(grid != g for g in starters):
            starters.append(grid)
        if sub > 50 * count:
            raise PatternForgeError("could not synthesize enough distinct starters")
    return starters
