"""Server side of the patternforge backend protocol, version 1.

Newline-delimited JSON over stdio. The adapter writes one handshake line:

    {"protocol": "patternforge-backend", "version": 1, "name": <model name>}

then answers one request per input line. Requests carry an integer ``id``,
a base64 canonical-P4 ``pattern``, a ``mask`` as a list of rect objects
({"x0", "y0", "x1", "y1"} in pixels), ``num_variations``, and a ``seed``.
Responses echo the id with either base64 ``variations`` or an ``error``
string. Unknown request fields are ignored; malformed ones produce an
error response instead of killing the loop.
"""

from __future__ import annotations

import base64
import json
import sys

from .pbm import load_pbm, save_pbm

PROTOCOL_NAME = "patternforge-backend"
PROTOCOL_VERSION = 1


class RequestError(ValueError):
    pass


def _require(obj: dict, key: str, kind):
    if key not in obj:
        raise RequestError(f"missing required field: {key}")
    value = obj[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise RequestError(f"field {key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_request(line: str) -> dict:
    """Decode one request line into {id, pixels, pitch, rects, n, seed}."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RequestError(f"request is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise RequestError("request must be a JSON object")
    rid = _require(obj, "id", int)
    try:
        payload = base64.b64decode(_require(obj, "pattern", str), validate=True)
    except RequestError:
        raise
    except Exception as exc:
        raise RequestError(f"bad base64 pattern: {exc}") from exc
    pixels, pitch = load_pbm(payload)
    h, w = pixels.shape
    rects = []
    for i, item in enumerate(_require(obj, "mask", list)):
        if not isinstance(item, dict):
            raise RequestError(f"mask[{i}] must be an object")
        rect = {k: _require(item, k, int) for k in ("x0", "y0", "x1", "y1")}
        if not (0 <= rect["x0"] < rect["x1"] <= w and 0 <= rect["y0"] < rect["y1"] <= h):
            raise RequestError(f"mask[{i}] out of bounds for {w}x{h} pattern")
        rects.append(rect)
    if not rects:
        raise RequestError("mask must contain at least one rect")
    n = _require(obj, "num_variations", int)
    if n < 1:
        raise RequestError("num_variations must be >= 1")
    return {
        "id": rid,
        "pixels": pixels,
        "pitch": pitch,
        "rects": rects,
        "n": n,
        "seed": _require(obj, "seed", int),
    }


def serve(inpainter, stdin=None, stdout=None) -> None:
    """Handshake, then answer requests until stdin closes."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stdout.write(
        json.dumps(
            {"protocol": PROTOCOL_NAME, "version": PROTOCOL_VERSION, "name": inpainter.name}
        )
        + "\n"
    )
    stdout.flush()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        rid = -1
        try:
            req = parse_request(line)
            rid = req["id"]
            variations = inpainter.inpaint(req["pixels"], req["rects"], req["n"], req["seed"])
            payloads = [
                base64.b64encode(save_pbm(v, req["pitch"])).decode("ascii") for v in variations
            ]
            reply = {"id": rid, "variations": payloads}
        except Exception as exc:
            reply = {"id": rid, "error": str(exc)}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
