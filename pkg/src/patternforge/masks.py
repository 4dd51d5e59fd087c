"""Predefined inpainting mask sets and violation-driven mask construction.

Each built-in set holds five masks covering roughly 25% of the image: the
default set uses the four quadrant corners plus the center, the horizontal
set uses full-width bands staggered down the image. Violation-driven masks
inflate DRC-flagged regions and skip masks that grow past an area budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .drc import Violation
from .errors import PatternForgeError
from .grid import (
    MASK_SET_CUSTOM,
    MASK_SET_DEFAULT,
    MASK_SET_HORIZONTAL,
    MaskSpec,
    Rect,
)

MIN_MASKABLE = 64
MASKS_PER_SET = 5


@dataclass(frozen=True)
class MaskSet:
    """Ordered set of five masks sharing one schedule identity."""

    kind: str
    masks: tuple[MaskSpec, ...]

    def __post_init__(self):
        if len(self.masks) != MASKS_PER_SET:
            raise PatternForgeError(f"a mask set holds {MASKS_PER_SET} masks, got {len(self.masks)}")
        if len({m.rects for m in self.masks}) != MASKS_PER_SET:
            raise PatternForgeError("masks within a set must be pairwise distinct")


class Skip:
    """Sentinel: the violation region grew past the mask area budget."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Skip"


SKIP = Skip()


def builtin_mask_set(kind: str, grid_dims: tuple[int, int]) -> MaskSet:
    """The built-in five-mask set of the given kind for a (width, height) grid."""
    w, h = grid_dims
    if w < MIN_MASKABLE or h < MIN_MASKABLE:
        raise PatternForgeError(f"grid must be at least {MIN_MASKABLE}x{MIN_MASKABLE}, got {w}x{h}")
    if kind == MASK_SET_DEFAULT:
        hw, hh = w // 2, h // 2
        cx, cy = (w - hw) // 2, (h - hh) // 2
        rects = [
            Rect(0, 0, hw, hh),
            Rect(w - hw, 0, w, hh),
            Rect(0, h - hh, hw, h),
            Rect(w - hw, h - hh, w, h),
            Rect(cx, cy, cx + hw, cy + hh),
        ]
    elif kind == MASK_SET_HORIZONTAL:
        band = round(h * 0.25)
        rects = []
        for i in range(MASKS_PER_SET):
            y0 = round(h * i * 0.75 / (MASKS_PER_SET - 1))
            rects.append(Rect(0, y0, w, y0 + band))
    else:
        raise PatternForgeError(f"no built-in mask set of kind {kind!r}")
    masks = tuple(
        MaskSpec(rects=(r,), set_id=kind, index=i) for i, r in enumerate(rects)
    )
    return MaskSet(kind=kind, masks=masks)


def all_builtin_masks(grid_dims: tuple[int, int]) -> list[MaskSpec]:
    """The ten predefined masks: default set followed by the horizontal set."""
    return [
        *builtin_mask_set(MASK_SET_DEFAULT, grid_dims).masks,
        *builtin_mask_set(MASK_SET_HORIZONTAL, grid_dims).masks,
    ]


def _inflate(r: Rect, expand_pct: float, w: int, h: int) -> Rect:
    dx, dy = r.width * expand_pct, r.height * expand_pct
    return Rect(
        max(0, r.x0 - math.floor(dx)),
        max(0, r.y0 - math.floor(dy)),
        min(w, r.x1 + math.ceil(dx)),
        min(h, r.y1 + math.ceil(dy)),
    )


def mask_from_violations(
    violations: list[Violation],
    expand_pct: float,
    max_area_frac: float,
    grid_dims: tuple[int, int],
) -> MaskSpec | Skip:
    """Union of inflated violation regions, or SKIP when it exceeds the budget.

    Each flagged region grows by ``expand_pct`` of its own side length per
    side (rounded outward, clamped to the grid).
    """
    if not violations:
        raise PatternForgeError("mask_from_violations needs at least one violation")
    w, h = grid_dims
    mask = MaskSpec(
        rects=tuple(_inflate(v.region, expand_pct, w, h) for v in violations),
        set_id=MASK_SET_CUSTOM,
        index=0,
    )
    if mask.area > max_area_frac * w * h:
        return SKIP
    return mask
