"""Pixel-level design-rule-check engine over configurable rule sets.

Widths and spacings are measured as maximal runs along pixel rows (axis
``h``) and columns (axis ``v``); areas as 4-connected components. Rule
identifiers follow the usual metal-layer naming: R3-W width, R3.1-W
discrete width, R1-S spacing, R1.<k>-S tiered spacing, R4-A area, E2E
end-to-end gaps on fixed tracks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from importlib import resources
from typing import NamedTuple, Optional

import numpy as np
from scipy import ndimage

from .errors import RuleConfigError
from .grid import PatternGrid, Rect

MODE_BIDIRECTIONAL = "bidirectional"
MODE_UNIDIRECTIONAL = "unidirectional_vertical_tracks"

VARIANT_DEFAULT = "default"
VARIANT_COMPLEX = "complex"
VARIANT_COMPLEX_DISCRETE = "complex_discrete"

_PRESETS = ("default", "complex", "complex_discrete", "uni7")


@dataclass(frozen=True)
class RuleSet:
    """Parameterized design-rule configuration; lengths in nm, areas in nm^2.

    ``None`` maxima mean unbounded. ``spacing_tiers`` is an ordered list of
    (width_at_least, required_min_space) pairs; the tier whose threshold is
    the largest one not exceeding the wider adjacent metal run applies.
    """

    min_width_h: int
    min_width_v: Optional[int] = None
    max_width_h: Optional[int] = None
    max_width_v: Optional[int] = None
    discrete_widths_h: Optional[tuple[int, ...]] = None
    discrete_widths_v: Optional[tuple[int, ...]] = None
    min_space_h: Optional[int] = None
    min_space_v: Optional[int] = None
    max_space_h: Optional[int] = None
    max_space_v: Optional[int] = None
    spacing_tiers: tuple[tuple[int, int], ...] = ()
    min_area: Optional[int] = None
    e2e_min_space: Optional[int] = None
    mode: str = MODE_BIDIRECTIONAL
    variant: str = VARIANT_DEFAULT

    def __post_init__(self):
        if self.mode not in (MODE_BIDIRECTIONAL, MODE_UNIDIRECTIONAL):
            raise RuleConfigError(f"unknown mode {self.mode!r}")
        if self.variant not in (VARIANT_DEFAULT, VARIANT_COMPLEX, VARIANT_COMPLEX_DISCRETE):
            raise RuleConfigError(f"unknown variant {self.variant!r}")
        if self.mode == MODE_UNIDIRECTIONAL:
            if self.e2e_min_space is None:
                raise RuleConfigError("unidirectional mode requires e2e_min_space")
        else:
            if self.min_width_v is None or self.min_space_h is None or self.min_space_v is None:
                raise RuleConfigError(
                    "bidirectional mode requires min_width_v, min_space_h and min_space_v"
                )
        for name in (
            "min_width_h", "min_width_v", "max_width_h", "max_width_v",
            "min_space_h", "min_space_v", "max_space_h", "max_space_v",
            "min_area", "e2e_min_space",
        ):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise RuleConfigError(f"{name} must be positive, got {v}")
        for lo, hi in (
            (self.min_width_h, self.max_width_h),
            (self.min_width_v, self.max_width_v),
            (self.min_space_h, self.max_space_h),
            (self.min_space_v, self.max_space_v),
        ):
            if lo is not None and hi is not None and lo > hi:
                raise RuleConfigError(f"min {lo} exceeds max {hi}")
        for axis in "hv":
            ds = getattr(self, f"discrete_widths_{axis}")
            if ds is None:
                continue
            ds = tuple(sorted(set(int(v) for v in ds)))
            object.__setattr__(self, f"discrete_widths_{axis}", ds)
            lo = getattr(self, f"min_width_{axis}")
            hi = getattr(self, f"max_width_{axis}")
            if not ds:
                raise RuleConfigError(f"discrete_widths_{axis} must be non-empty when set")
            if (lo is not None and ds[0] < lo) or (hi is not None and ds[-1] > hi):
                raise RuleConfigError(f"discrete_widths_{axis} must lie within [min, max]")
        tiers = tuple((int(w), int(s)) for w, s in self.spacing_tiers)
        object.__setattr__(self, "spacing_tiers", tiers)
        if any(a[0] >= b[0] for a, b in zip(tiers, tiers[1:])):
            raise RuleConfigError("spacing_tiers must be strictly increasing in width_at_least")

    def to_json(self) -> str:
        obj = asdict(self)
        obj["spacing_tiers"] = [list(t) for t in self.spacing_tiers]
        for axis in "hv":
            key = f"discrete_widths_{axis}"
            if obj[key] is not None:
                obj[key] = list(obj[key])
        return json.dumps({k: v for k, v in obj.items() if v is not None}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RuleSet":
        obj = json.loads(text)
        if "spacing_tiers" in obj:
            obj["spacing_tiers"] = tuple((int(w), int(s)) for w, s in obj["spacing_tiers"])
        for axis in "hv":
            key = f"discrete_widths_{axis}"
            if obj.get(key) is not None:
                obj[key] = tuple(obj[key])
        return cls(**obj)


def load_preset(name: str) -> RuleSet:
    """Load one of the shipped rule presets: default, complex, complex_discrete, uni7."""
    if name not in _PRESETS:
        raise RuleConfigError(f"unknown preset {name!r}; available: {', '.join(_PRESETS)}")
    text = resources.files("patternforge").joinpath(f"presets/{name}.json").read_text()
    return RuleSet.from_json(text)


class Run(NamedTuple):
    """Maximal constant run along one scanline."""

    start: int
    length: int
    value: int


@dataclass(frozen=True)
class RunList:
    """Per-scanline maximal-run decomposition; ``lines[i]`` covers row/col i."""

    axis: str
    lines: tuple[tuple[Run, ...], ...]


@dataclass(frozen=True, order=True)
class Violation:
    """One design-rule violation with its flagged region."""

    rule_id: str
    region: Rect
    axis: str  # 'h', 'v' or 'none'
    measured: float  # nm, or nm^2 for area rules
    required: str

    def to_json(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "region": self.region.to_json(),
            "axis": self.axis,
            "measured": self.measured,
            "required": self.required,
        }


def runs(grid: PatternGrid, axis: str) -> RunList:
    """Maximal-run decomposition of every row (axis 'h') or column ('v')."""
    if axis not in ("h", "v"):
        raise RuleConfigError(f"axis must be 'h' or 'v', got {axis!r}")
    px = grid.pixels if axis == "h" else grid.pixels.T
    lines = []
    for row in px:
        cuts = np.flatnonzero(np.diff(row.astype(np.int8))) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [len(row)]))
        lines.append(tuple(Run(int(s), int(e - s), int(row[s])) for s, e in zip(starts, ends)))
    return RunList(axis=axis, lines=tuple(lines))


def _line_rect(axis: str, line_idx: int, start: int, end: int) -> Rect:
    if axis == "h":
        return Rect(start, line_idx, end, line_idx + 1)
    return Rect(line_idx, start, line_idx + 1, end)


def _tier_for(rules: RuleSet, neighbor_width_nm: int) -> tuple[int, int] | None:
    """(tier ordinal starting at 1, required space) or None when no tier applies."""
    hit = None
    for k, (w_at_least, space) in enumerate(rules.spacing_tiers, start=1):
        if neighbor_width_nm >= w_at_least:
            hit = (k, space)
    return hit


def _axis_violations(grid: PatternGrid, rules: RuleSet, axis: str) -> list[Violation]:
    pitch = grid.pitch_nm
    extent = grid.width if axis == "h" else grid.height
    min_w = getattr(rules, f"min_width_{axis}")
    max_w = getattr(rules, f"max_width_{axis}")
    discrete = getattr(rules, f"discrete_widths_{axis}")
    min_s = getattr(rules, f"min_space_{axis}")
    max_s = getattr(rules, f"max_space_{axis}")
    uni = rules.mode == MODE_UNIDIRECTIONAL
    check_width = not (uni and axis == "v")
    check_space = not uni
    check_e2e = uni and axis == "v"

    out: list[Violation] = []
    for idx, line in enumerate(runs(grid, axis).lines):
        for pos, run in enumerate(line):
            start, length, value = run
            end = start + length
            nm = length * pitch
            border = start == 0 or end == extent
            rect = _line_rect(axis, idx, start, end)
            if value == 1 and check_width:
                if min_w is not None and nm < min_w:
                    out.append(Violation("R3-W", rect, axis, nm, f"width >= {min_w} nm"))
                if not border:
                    if max_w is not None and nm > max_w:
                        out.append(Violation("R3-W", rect, axis, nm, f"width <= {max_w} nm"))
                    if discrete is not None and nm not in discrete:
                        out.append(
                            Violation("R3.1-W", rect, axis, nm, f"width in {{{', '.join(map(str, discrete))}}} nm")
                        )
            elif value == 0 and 0 < pos < len(line) - 1:
                # Interior gap: bounded by metal runs on both sides.
                if check_e2e:
                    if nm < rules.e2e_min_space:
                        out.append(Violation("E2E", rect, axis, nm, f"end-to-end gap >= {rules.e2e_min_space} nm"))
                if check_space:
                    left_w = line[pos - 1].length * pitch
                    right_w = line[pos + 1].length * pitch
                    rule_id, req = "R1-S", min_s
                    tier = _tier_for(rules, max(left_w, right_w))
                    if tier is not None and tier[1] > (min_s or 0):
                        rule_id, req = f"R1.{tier[0]}-S", tier[1]
                    if req is not None and nm < req:
                        out.append(Violation(rule_id, rect, axis, nm, f"spacing >= {req} nm"))
                    if max_s is not None and nm > max_s:
                        out.append(Violation("R1-S", rect, axis, nm, f"spacing <= {max_s} nm"))
    return out


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


def label_components(pixels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected labeling of metal components.

    Returns (labels, count); background is 0, components are 1..count.
    """
    labels, count = ndimage.label(pixels, structure=_FOUR_CONNECTED)
    return labels, int(count)


def _area_violations(grid: PatternGrid, rules: RuleSet) -> list[Violation]:
    if rules.min_area is None:
        return []
    labels, count = label_components(grid.pixels)
    out = []
    area_scale = grid.pitch_nm * grid.pitch_nm
    counts = np.bincount(labels.ravel(), minlength=count + 1)
    boxes = ndimage.find_objects(labels)
    for lbl in range(1, count + 1):
        area_nm2 = int(counts[lbl]) * area_scale
        if area_nm2 < rules.min_area:
            sy, sx = boxes[lbl - 1]
            rect = Rect(int(sx.start), int(sy.start), int(sx.stop), int(sy.stop))
            out.append(Violation("R4-A", rect, "none", area_nm2, f"area >= {rules.min_area} nm^2"))
    return out


def _touching(a: Rect, b: Rect) -> bool:
    return a.x1 >= b.x0 and b.x1 >= a.x0 and a.y1 >= b.y0 and b.y1 >= a.y0


def merge_violations(violations: list[Violation]) -> list[Violation]:
    """Fuse same-rule violations whose regions touch into one bounding box."""
    by_key: dict[tuple[str, str], list[Violation]] = {}
    for v in violations:
        by_key.setdefault((v.rule_id, v.axis), []).append(v)
    merged: list[Violation] = []
    for (rule_id, axis), group in by_key.items():
        pool = sorted(group)
        while pool:
            cur = pool.pop(0)
            changed = True
            while changed:
                changed = False
                rest = []
                for v in pool:
                    if _touching(cur.region, v.region):
                        cur = Violation(
                            rule_id,
                            Rect(
                                min(cur.region.x0, v.region.x0),
                                min(cur.region.y0, v.region.y0),
                                max(cur.region.x1, v.region.x1),
                                max(cur.region.y1, v.region.y1),
                            ),
                            axis,
                            min(cur.measured, v.measured),
                            cur.required,
                        )
                        changed = True
                    else:
                        rest.append(v)
                pool = rest
            merged.append(cur)
    return sorted(merged)


def check(grid: PatternGrid, rules: RuleSet, merge: bool = True) -> list[Violation]:
    """All violations of ``rules`` in ``grid``, canonically sorted.

    With ``merge=True`` (default) same-rule violations on touching regions
    are fused into a single bounding-box region, giving one entry per defect.
    """
    out = _axis_violations(grid, rules, "h") + _axis_violations(grid, rules, "v")
    if rules.mode == MODE_BIDIRECTIONAL:
        out += _area_violations(grid, rules)
    return merge_violations(out) if merge else sorted(out)


def is_legal(grid: PatternGrid, rules: RuleSet) -> bool:
    """True iff the grid is DR-clean."""
    return not check(grid, rules, merge=False)
