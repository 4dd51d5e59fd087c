"""Template-based denoising: snap jittered scan lines back onto a template.

Generated patterns carry edge noise: spurious scan lines within a few pixels
of the real geometry. Lines already present in the template are kept; the
remaining lines are clustered by proximity and each cluster is replaced by
the nearest template line when one lies within the threshold, otherwise by
one of its own members. Cell contents are then re-voted from the generated
image and the pattern is rebuilt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, PatternForgeError
from .grid import PatternGrid
from .squish import extract_scan_lines


@dataclass(frozen=True)
class LineCluster:
    """A group of nearby scan-line positions and its resolved replacement."""

    positions: tuple[int, ...]
    centroid: float
    replacement: Optional[int] = None

    def __post_init__(self):
        if not self.positions:
            raise PatternForgeError("cluster must be non-empty")


def cluster_lines(positions: Sequence[int], threshold: int) -> list[LineCluster]:
    """Greedy chaining: consecutive positions with gap <= threshold share a cluster."""
    if threshold < 0:
        raise PatternForgeError(f"threshold must be >= 0, got {threshold}")
    positions = list(positions)
    if any(a >= b for a, b in zip(positions, positions[1:])):
        raise PatternForgeError("positions must be strictly increasing")
    clusters: list[list[int]] = []
    for p in positions:
        if clusters and p - clusters[-1][-1] <= threshold:
            clusters[-1].append(p)
        else:
            clusters.append([p])
    return [
        LineCluster(positions=tuple(c), centroid=float(np.mean(c))) for c in clusters
    ]


def _resolve_axis(
    gen_lines: Sequence[int],
    tmpl_lines: Sequence[int],
    extent: int,
    threshold: int,
    rng: np.random.Generator,
    deterministic: bool,
) -> list[int]:
    """Final scan-line positions for one axis (boundaries always included)."""
    tmpl_set = set(tmpl_lines)
    interior = [p for p in gen_lines if 0 < p < extent]
    kept = [p for p in interior if p in tmpl_set]
    noise = [p for p in interior if p not in tmpl_set]
    resolved: set[int] = {0, extent} | set(kept)
    candidates = sorted(tmpl_set | {0, extent})
    for cluster in cluster_lines(noise, threshold):
        # Point-to-set distance: nearest (template line, member) pair.
        best = min(
            (abs(t - m), t) for t in candidates for m in cluster.positions
        )
        if best[0] <= threshold:
            resolved.add(best[1])
        elif deterministic:
            members = cluster.positions
            resolved.add(members[(len(members) - 1) // 2])
        else:
            resolved.add(int(rng.choice(cluster.positions)))
    return sorted(resolved)


def _rebuild(generated: PatternGrid, xs: list[int], ys: list[int]) -> PatternGrid:
    """Majority-vote each cell of the generated image; ties take the top-left pixel."""
    px = generated.pixels
    cum = np.zeros((px.shape[0] + 1, px.shape[1] + 1), dtype=np.int64)
    cum[1:, 1:] = px.cumsum(axis=0).cumsum(axis=1)
    out = np.empty(px.shape, dtype=np.uint8)
    for y0, y1 in zip(ys, ys[1:]):
        for x0, x1 in zip(xs, xs[1:]):
            ones = cum[y1, x1] - cum[y0, x1] - cum[y1, x0] + cum[y0, x0]
            area = (y1 - y0) * (x1 - x0)
            if 2 * ones == area:
                value = px[y0, x0]
            else:
                value = 1 if 2 * ones > area else 0
            out[y0:y1, x0:x1] = value
    return PatternGrid(out, generated.pitch_nm)


def denoise(
    generated: PatternGrid,
    template: PatternGrid,
    threshold: int = 2,
    seed: int = 0,
    deterministic: bool = False,
) -> PatternGrid:
    """Snap the generated pattern's scan lines back to the template's.

    Lines the template already has are retained. Remaining lines are
    clustered (gap <= ``threshold``); a cluster within ``threshold`` of a
    template line collapses onto it, otherwise one member is kept, chosen
    by the seeded generator, or the lower-median member when
    ``deterministic`` is set. Cell values are re-voted from the generated
    pixels and the raster rebuilt.
    """
    if (
        generated.width != template.width
        or generated.height != template.height
        or generated.pitch_nm != template.pitch_nm
    ):
        raise DimensionMismatchError(f"{generated!r} vs {template!r}: shapes/pitch must match")
    gen = extract_scan_lines(generated)
    tmpl = extract_scan_lines(template)
    rng = np.random.default_rng(seed)
    xs = _resolve_axis(gen.xs, tmpl.xs, generated.width, threshold, rng, deterministic)
    ys = _resolve_axis(gen.ys, tmpl.ys, generated.height, threshold, rng, deterministic)
    return _rebuild(generated, xs, ys)
