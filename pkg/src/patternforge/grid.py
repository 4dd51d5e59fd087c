"""Binary pixel-grid layout model with PBM I/O, cropping, and mask checks.

A pattern is a single metal layer rasterized to binary pixels (1 = metal).
Files are PBM P1/P4 with the physical pixel pitch carried in a
``# pitch_nm=<int>`` comment directly after the magic number.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DimensionMismatchError, PatternForgeError, PbmParseError

_PITCH_RE = re.compile(rb"#\s*pitch_nm=(\d+)\s*$")


class PatternGrid:
    """Immutable binary raster of one metal layer.

    Pixels are row-major uint8 values in {0, 1}; ``pitch_nm`` is the physical
    edge length of one pixel in nanometers.
    """

    __slots__ = ("_pixels", "_pitch_nm")

    def __init__(self, pixels, pitch_nm: int = 1):
        arr = np.ascontiguousarray(pixels, dtype=np.uint8)
        if arr.ndim != 2:
            raise PatternForgeError(f"pixels must be 2-D, got ndim={arr.ndim}")
        h, w = arr.shape
        if w < 1 or h < 1:
            raise PatternForgeError(f"grid dimensions must be >= 1, got {w}x{h}")
        if arr.size and arr.max() > 1:
            raise PatternForgeError("pixel values must be 0 or 1")
        if not isinstance(pitch_nm, (int, np.integer)) or pitch_nm <= 0:
            raise PatternForgeError(f"pitch_nm must be a positive integer, got {pitch_nm!r}")
        arr = arr.copy()
        arr.flags.writeable = False
        self._pixels = arr
        self._pitch_nm = int(pitch_nm)

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def pitch_nm(self) -> int:
        return self._pitch_nm

    def density(self) -> float:
        """Fraction of metal pixels."""
        return float(self._pixels.mean())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatternGrid):
            return NotImplemented
        return (
            self._pitch_nm == other._pitch_nm
            and self._pixels.shape == other._pixels.shape
            and bool(np.array_equal(self._pixels, other._pixels))
        )

    def __hash__(self) -> int:
        return hash((self._pitch_nm, self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self) -> str:
        return f"PatternGrid({self.width}x{self.height}, pitch={self._pitch_nm}nm)"

    @classmethod
    def zeros(cls, width: int, height: int, pitch_nm: int = 1) -> "PatternGrid":
        return cls(np.zeros((height, width), dtype=np.uint8), pitch_nm)


@dataclass(frozen=True, order=True)
class Rect:
    """Axis-aligned pixel rectangle; (x0, y0) inclusive, (x1, y1) exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0 or self.x0 >= self.x1 or self.y0 >= self.y1:
            raise BoundsError(f"degenerate or negative rect {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def within(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def to_json(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}

    @classmethod
    def from_json(cls, obj: dict) -> "Rect":
        return cls(int(obj["x0"]), int(obj["y0"]), int(obj["x1"]), int(obj["y1"]))


def normalize_rects(rects) -> tuple[Rect, ...]:
    """Decompose a union of rects into canonical disjoint rects.

    Sweeps y-bands over the distinct y coordinates, merges x intervals per
    band, then fuses vertically adjacent bands with identical x spans.
    """
    rects = list(rects)
    if not rects:
        return ()
    ys = sorted({r.y0 for r in rects} | {r.y1 for r in rects})
    bands: list[tuple[int, int, tuple[tuple[int, int], ...]]] = []
    for y0, y1 in zip(ys, ys[1:]):
        spans = sorted((r.x0, r.x1) for r in rects if r.y0 <= y0 and r.y1 >= y1)
        if not spans:
            continue
        merged = [list(spans[0])]
        for a, b in spans[1:]:
            if a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        key = tuple((a, b) for a, b in merged)
        if bands and bands[-1][1] == y0 and bands[-1][2] == key:
            bands[-1] = (bands[-1][0], y1, key)
        else:
            bands.append((y0, y1, key))
    out = []
    for y0, y1, spans in bands:
        for a, b in spans:
            out.append(Rect(a, y0, b, y1))
    return tuple(sorted(out))


MASK_SET_DEFAULT = "default"
MASK_SET_HORIZONTAL = "horizontal"
MASK_SET_CUSTOM = "custom"
_MASK_SET_IDS = (MASK_SET_DEFAULT, MASK_SET_HORIZONTAL, MASK_SET_CUSTOM)


@dataclass(frozen=True)
class MaskSpec:
    """Inpainting region: a union of rects plus its schedule identity."""

    rects: tuple[Rect, ...]
    set_id: str = MASK_SET_CUSTOM
    index: int = 0

    def __post_init__(self):
        if not self.rects:
            raise PatternForgeError("mask must contain at least one rect")
        if self.set_id not in _MASK_SET_IDS:
            raise PatternForgeError(f"unknown mask set id {self.set_id!r}")
        object.__setattr__(self, "rects", normalize_rects(self.rects))

    @property
    def area(self) -> int:
        # Rects are disjoint after normalization.
        return sum(r.area for r in self.rects)

    def to_bool_array(self, width: int, height: int) -> np.ndarray:
        """Rasterize to a (height, width) boolean array; True inside the mask."""
        for r in self.rects:
            if not r.within(width, height):
                raise BoundsError(f"mask rect {r} outside {width}x{height} grid")
        out = np.zeros((height, width), dtype=bool)
        for r in self.rects:
            out[r.y0 : r.y1, r.x0 : r.x1] = True
        return out

    def to_json(self) -> dict:
        return {
            "rects": [r.to_json() for r in self.rects],
            "set_id": self.set_id,
            "index": self.index,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MaskSpec":
        return cls(
            rects=tuple(Rect.from_json(r) for r in obj["rects"]),
            set_id=obj.get("set_id", MASK_SET_CUSTOM),
            index=int(obj.get("index", 0)),
        )


# ---------------------------------------------------------------------------
# PBM codec
# ---------------------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.pitch: int | None = None

    def err(self, message: str, offset: int | None = None) -> PbmParseError:
        return PbmParseError(message, self.pos if offset is None else offset)

    def _skip_comment(self):
        start = self.pos
        end = self.data.find(b"\n", self.pos)
        line = self.data[self.pos : end if end >= 0 else len(self.data)]
        m = _PITCH_RE.match(line)
        if m:
            self.pitch = int(m.group(1))
        self.pos = len(self.data) if end < 0 else end + 1
        del start

    def skip_space(self):
        while self.pos < len(self.data):
            c = self.data[self.pos : self.pos + 1]
            if c.isspace():
                self.pos += 1
            elif c == b"#":
                self._skip_comment()
            else:
                return

    def read_int(self, what: str) -> int:
        self.skip_space()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            raise self.err(f"expected {what}")
        return int(self.data[start : self.pos])


def load_pattern(data: bytes) -> PatternGrid:
    """Parse PBM P1 (ASCII) or P4 (packed binary) bytes into a grid.

    An optional ``# pitch_nm=<int>`` header comment sets the pixel pitch;
    absent it defaults to 1 nm. Raises :class:`PbmParseError` naming the byte
    offset of the first malformed token.
    """
    r = _Reader(data)
    magic = data[:2]
    if magic not in (b"P1", b"P4"):
        raise r.err(f"not a PBM P1/P4 file (magic {magic!r})", 0)
    r.pos = 2
    width = r.read_int("width")
    height = r.read_int("height")
    if width < 1 or height < 1:
        raise r.err(f"invalid dimensions {width}x{height}")
    arr = np.empty((height, width), dtype=np.uint8)

    if magic == b"P1":
        count = 0
        r.skip_space()
        while count < width * height:
            if r.pos >= len(data):
                raise r.err(f"unexpected end of data after {count} of {width * height} pixels")
            c = data[r.pos : r.pos + 1]
            if c in (b"0", b"1"):
                arr[count // width, count % width] = c == b"1"
                count += 1
                r.pos += 1
                r.skip_space()
            else:
                raise r.err(f"non-binary token {c!r}")
    else:
        # Exactly one whitespace byte separates the header from the raster.
        if r.pos >= len(data) or not data[r.pos : r.pos + 1].isspace():
            raise r.err("expected single whitespace before P4 raster")
        r.pos += 1
        row_bytes = (width + 7) // 8
        need = row_bytes * height
        payload = data[r.pos : r.pos + need]
        if len(payload) < need:
            raise r.err(
                f"P4 raster truncated: need {need} bytes, have {len(payload)}",
                r.pos + len(payload),
            )
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8).reshape(height, row_bytes), axis=1)
        arr = bits[:, :width]
    return PatternGrid(arr, r.pitch or 1)


def save_pattern(grid: PatternGrid, format: str = "P4") -> bytes:
    """Serialize to canonical PBM bytes (pitch comment always emitted)."""
    if format not in ("P1", "P4"):
        raise PatternForgeError(f"format must be 'P1' or 'P4', got {format!r}")
    header = f"{format}\n# pitch_nm={grid.pitch_nm}\n{grid.width} {grid.height}\n".encode()
    if format == "P1":
        body = b"\n".join(b" ".join(b"1" if v else b"0" for v in row) for row in grid.pixels)
        return header + body + b"\n"
    packed = np.packbits(grid.pixels, axis=1)
    return header + packed.tobytes()


def canonical_p4(grid: PatternGrid) -> bytes:
    """Canonical P4 byte representation used for hashing and dedup."""
    return save_pattern(grid, "P4")


# ---------------------------------------------------------------------------
# Geometry operations
# ---------------------------------------------------------------------------


def crop(grid: PatternGrid, r: Rect) -> PatternGrid:
    """Copy the sub-raster under ``r``; same pitch."""
    if not r.within(grid.width, grid.height):
        raise BoundsError(f"rect {r} outside {grid.width}x{grid.height} grid")
    return PatternGrid(grid.pixels[r.y0 : r.y1, r.x0 : r.x1], grid.pitch_nm)


def split_clips(grid: PatternGrid, clip_width: int, clip_height: int, count: int | None = None) -> list[PatternGrid]:
    """Split a large layout into ``count`` clips of the given size.

    Clips are placed on an evenly spaced raster: as many non-overlapping rows
    as fit vertically, with horizontal positions spread (and overlapping when
    needed) to reach ``count``. ``count=None`` yields the plain tiling.
    """
    if clip_width > grid.width or clip_height > grid.height:
        raise BoundsError(f"clip {clip_width}x{clip_height} larger than grid")
    ny = grid.height // clip_height
    nx = grid.width // clip_width
    if count is not None:
        if count < 1:
            raise PatternForgeError("count must be >= 1")
        nx = max(nx, math.ceil(count / ny))
    xs = np.unique(np.round(np.linspace(0, grid.width - clip_width, nx)).astype(int))
    ys = np.round(np.linspace(0, grid.height - clip_height, ny)).astype(int)
    clips = []
    for y in ys:
        for x in xs:
            clips.append(crop(grid, Rect(int(x), int(y), int(x) + clip_width, int(y) + clip_height)))
    if count is not None:
        if len(clips) < count:
            raise PatternForgeError(f"cannot place {count} clips, only {len(clips)} positions")
        clips = clips[:count]
    return clips


def assert_mask_preserving(original: PatternGrid, variation: PatternGrid, mask: MaskSpec) -> bool:
    """True iff every pixel outside the mask is identical in both grids."""
    if (
        original.width != variation.width
        or original.height != variation.height
        or original.pitch_nm != variation.pitch_nm
    ):
        raise DimensionMismatchError(
            f"{original!r} vs {variation!r}: shapes/pitch must match"
        )
    inside = mask.to_bool_array(original.width, original.height)
    return bool(np.array_equal(original.pixels[~inside], variation.pixels[~inside]))
