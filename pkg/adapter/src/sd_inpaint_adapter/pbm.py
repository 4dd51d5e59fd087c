"""Minimal PBM P1/P4 codec with the ``# pitch_nm=<int>`` header comment.

Only what the protocol needs: parse whatever a conforming client may send,
emit the canonical P4 form (magic, pitch comment, dimensions, packed rows).
"""

from __future__ import annotations

import re

import numpy as np

_PITCH_RE = re.compile(rb"#\s*pitch_nm=(\d+)\s*$")


class PbmError(ValueError):
    pass


def _tokenize_header(data: bytes, count: int):
    """Return (tokens, offset past header). Comments end at newline."""
    tokens = []
    pitch = 1
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise PbmError("truncated PBM header")
        c = data[pos : pos + 1]
        if c == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                end = len(data)
            m = _PITCH_RE.match(data[pos:end])
            if m:
                pitch = int(m.group(1))
            pos = end + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    return tokens, pos, pitch


def load_pbm(data: bytes) -> tuple[np.ndarray, int]:
    """Parse P1 or P4 bytes into (uint8 pixel array, pitch_nm)."""
    magic = data[:2]
    if magic not in (b"P1", b"P4"):
        raise PbmError(f"unsupported PBM magic {magic!r}")
    (w_tok, h_tok), pos, pitch = _tokenize_header(data[2:], 2)
    pos += 2
    try:
        w, h = int(w_tok), int(h_tok)
    except ValueError as exc:
        raise PbmError(f"bad dimensions {w_tok!r} {h_tok!r}") from exc
    if w < 1 or h < 1:
        raise PbmError(f"dimensions must be positive, got {w}x{h}")
    if magic == b"P1":
        bits = []
        for tok in data[pos:].split():
            if tok.startswith(b"#"):
                continue
            for ch in tok:
                if ch not in (0x30, 0x31):
                    raise PbmError(f"non-binary P1 token {tok!r}")
                bits.append(ch - 0x30)
        if len(bits) != w * h:
            raise PbmError(f"expected {w * h} bits, got {len(bits)}")
        return np.array(bits, dtype=np.uint8).reshape(h, w), pitch
    pos += 1  # single whitespace byte after the height
    row_bytes = (w + 7) // 8
    raster = data[pos : pos + row_bytes * h]
    if len(raster) < row_bytes * h:
        raise PbmError("truncated P4 raster")
    rows = np.frombuffer(raster, dtype=np.uint8).reshape(h, row_bytes)
    return np.unpackbits(rows, axis=1)[:, :w], pitch


def save_pbm(pixels: np.ndarray, pitch_nm: int = 1) -> bytes:
    """Canonical P4 bytes for a binary pixel array."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    header = f"P4\n# pitch_nm={pitch_nm}\n{w} {h}\n".encode()
    return header + np.packbits(pixels, axis=1).tobytes()
