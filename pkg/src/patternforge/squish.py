"""Squish codec: scan-line extraction, topology + delta encoding, decoding.

The squish form compresses a rectilinear pattern into a minimal binary
topology matrix plus physical cell extents (delta vectors, in nm). Scan
lines are placed wherever the raster changes along an axis, plus the two
boundaries, so a W-pixel grid with no internal edges has one cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import PatternForgeError, QuantizationError, TopologyError
from .grid import PatternGrid


@dataclass(frozen=True)
class ScanLineSet:
    """Sorted pixel positions of vertical (xs) and horizontal (ys) scan lines.

    Both boundaries are always included: xs starts at 0 and ends at width.
    """

    xs: tuple[int, ...]
    ys: tuple[int, ...]

    def __post_init__(self):
        for name, v in (("xs", self.xs), ("ys", self.ys)):
            if len(v) < 2 or v[0] != 0 or any(a >= b for a, b in zip(v, v[1:])):
                raise PatternForgeError(f"{name} must be strictly increasing from 0, got {v}")


@dataclass(frozen=True)
class SquishPattern:
    """Minimal binary topology matrix with physical cell extents in nm."""

    topology: tuple[tuple[int, ...], ...]
    delta_x: tuple[int, ...]
    delta_y: tuple[int, ...]

    def __post_init__(self):
        rows = len(self.topology)
        if rows == 0 or len(self.topology[0]) == 0:
            raise TopologyError("topology must be non-empty")
        cols = len(self.topology[0])
        if any(len(r) != cols for r in self.topology):
            raise TopologyError("topology rows must have equal length")
        if any(v not in (0, 1) for r in self.topology for v in r):
            raise TopologyError("topology cells must be 0 or 1")
        if len(self.delta_y) != rows or len(self.delta_x) != cols:
            raise TopologyError(
                f"delta lengths ({len(self.delta_x)}, {len(self.delta_y)}) "
                f"must match topology dims ({cols}, {rows})"
            )
        if any(d <= 0 for d in self.delta_x) or any(d <= 0 for d in self.delta_y):
            raise TopologyError("all deltas must be positive")
        for a, b in zip(self.topology, self.topology[1:]):
            if a == b:
                raise TopologyError("adjacent identical topology rows (non-minimal)")
        for j in range(cols - 1):
            if all(r[j] == r[j + 1] for r in self.topology):
                raise TopologyError("adjacent identical topology columns (non-minimal)")

    def topology_array(self) -> np.ndarray:
        return np.array(self.topology, dtype=np.uint8)

    @property
    def physical_width_nm(self) -> int:
        return sum(self.delta_x)

    @property
    def physical_height_nm(self) -> int:
        return sum(self.delta_y)

    def to_json(self) -> str:
        return json.dumps(
            {
                "topology": [list(r) for r in self.topology],
                "delta_x_nm": list(self.delta_x),
                "delta_y_nm": list(self.delta_y),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SquishPattern":
        obj = json.loads(text)
        return cls(
            topology=tuple(tuple(int(v) for v in row) for row in obj["topology"]),
            delta_x=tuple(int(v) for v in obj["delta_x_nm"]),
            delta_y=tuple(int(v) for v in obj["delta_y_nm"]),
        )


@dataclass(frozen=True)
class ComplexityTuple:
    """Scan-line counts per axis, each reduced by one (= topology dims)."""

    cx: int
    cy: int

    def __post_init__(self):
        if self.cx < 1 or self.cy < 1:
            raise PatternForgeError(f"complexity components must be >= 1, got {self}")


def check_minimal(topology: np.ndarray) -> None:
    """Raise TopologyError unless no two adjacent rows/columns are identical."""
    if topology.shape[1] > 1 and not (topology[:, 1:] != topology[:, :-1]).any(axis=0).all():
        raise TopologyError("adjacent identical topology columns (non-minimal)")
    if topology.shape[0] > 1 and not (topology[1:] != topology[:-1]).any(axis=1).all():
        raise TopologyError("adjacent identical topology rows (non-minimal)")


def extract_scan_lines(grid: PatternGrid) -> ScanLineSet:
    """Scan lines at every position where the raster changes, plus boundaries."""
    px = grid.pixels
    w, h = grid.width, grid.height
    if px.size <= 256:
        # numpy per-call overhead dominates on tiny grids
        rows = px.tolist()
        xcut = [
            x
            for x in range(1, w)
            if any(row[x] != row[x - 1] for row in rows)
        ]
        ycut = [y for y in range(1, h) if rows[y] != rows[y - 1]]
        return ScanLineSet(xs=(0, *xcut, w), ys=(0, *ycut, h))
    if w > 1:
        xcut = np.flatnonzero((px[:, 1:] != px[:, :-1]).any(axis=0)) + 1
    else:
        xcut = ()
    if h > 1:
        ycut = np.flatnonzero((px[1:] != px[:-1]).any(axis=1)) + 1
    else:
        ycut = ()
    return ScanLineSet(xs=(0, *map(int, xcut), w), ys=(0, *map(int, ycut), h))


def encode(grid: PatternGrid) -> SquishPattern:
    """Compress a grid into its minimal squish form (deltas in nm)."""
    lines = extract_scan_lines(grid)
    xs, ys = lines.xs, lines.ys
    px = grid.pixels
    pitch = grid.pitch_nm
    return SquishPattern(
        topology=tuple(
            tuple(int(px[y, x]) for x in xs[:-1]) for y in ys[:-1]
        ),
        delta_x=tuple((b - a) * pitch for a, b in zip(xs, xs[1:])),
        delta_y=tuple((b - a) * pitch for a, b in zip(ys, ys[1:])),
    )


def decode(sq: SquishPattern, pitch_nm: int = 1) -> PatternGrid:
    """Expand a squish pattern back to pixels at the given pitch."""
    if pitch_nm <= 0:
        raise PatternForgeError(f"pitch_nm must be positive, got {pitch_nm}")
    for d in (*sq.delta_x, *sq.delta_y):
        if d % pitch_nm:
            raise QuantizationError(f"delta {d} nm not divisible by pitch {pitch_nm} nm")
    reps_x = [d // pitch_nm for d in sq.delta_x]
    reps_y = [d // pitch_nm for d in sq.delta_y]
    topo = sq.topology_array()
    if all(r == 1 for r in reps_x) and all(r == 1 for r in reps_y):
        return PatternGrid(topo, pitch_nm)  # one pixel per cell
    px = np.repeat(np.repeat(topo, reps_y, axis=0), reps_x, axis=1)
    return PatternGrid(px, pitch_nm)


def complexity(sq: SquishPattern) -> ComplexityTuple:
    """Topology (column count, row count): scan-line counts minus one."""
    return ComplexityTuple(cx=len(sq.delta_x), cy=len(sq.topology))
