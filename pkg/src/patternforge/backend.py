"""Variation-backend protocol: newline-delimited JSON over subprocess stdio.

A backend process emits one handshake line, then answers one request per
line. Pattern payloads are base64 of canonical P4 bytes. The client never
trusts a backend: every returned variation is re-validated for shape and
mask preservation before it can reach a library.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import BackendError, ProtocolError
from .grid import MaskSpec, PatternGrid, Rect, assert_mask_preserving, canonical_p4, load_pattern

PROTOCOL_NAME = "patternforge-backend"
PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class BackendRequest:
    """One variation request; ``pattern`` is canonical P4 bytes."""

    id: int
    pattern: bytes
    mask: tuple[Rect, ...]
    num_variations: int
    seed: int

    def __post_init__(self):
        if not self.mask:
            raise ProtocolError("mask must contain at least one rect", "mask")
        if self.num_variations < 1:
            raise ProtocolError("num_variations must be >= 1", "num_variations")


@dataclass(frozen=True)
class BackendResponse:
    id: int
    variations: tuple[bytes, ...] = ()
    error: Optional[str] = None


def encode_request(req: BackendRequest) -> str:
    """One JSON line (no trailing newline) for the wire."""
    return json.dumps(
        {
            "id": req.id,
            "pattern": base64.b64encode(req.pattern).decode("ascii"),
            "mask": [r.to_json() for r in req.mask],
            "num_variations": req.num_variations,
            "seed": req.seed,
        }
    )


def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise ProtocolError("missing required field", f"{path}{key}")
    value = obj[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ProtocolError(f"expected {kind.__name__}, got {type(value).__name__}", f"{path}{key}")
    return value


def parse_request(line: str) -> BackendRequest:
    """Parse a request line; unknown fields are ignored."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"request is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("request must be a JSON object")
    mask_items = _require(obj, "mask", list, "")
    try:
        mask = tuple(Rect.from_json(m) for m in mask_items)
    except Exception as exc:
        raise ProtocolError(f"bad mask rect: {exc}", "mask") from exc
    try:
        pattern = base64.b64decode(_require(obj, "pattern", str, ""), validate=True)
    except Exception as exc:
        raise ProtocolError(f"bad base64 payload: {exc}", "pattern") from exc
    return BackendRequest(
        id=_require(obj, "id", int, ""),
        pattern=pattern,
        mask=mask,
        num_variations=_require(obj, "num_variations", int, ""),
        seed=_require(obj, "seed", int, ""),
    )


def encode_response(resp: BackendResponse) -> str:
    if resp.error is not None:
        return json.dumps({"id": resp.id, "error": resp.error})
    return json.dumps(
        {
            "id": resp.id,
            "variations": [base64.b64encode(v).decode("ascii") for v in resp.variations],
        }
    )


def parse_response(line: str) -> BackendResponse:
    """Parse a response line; unknown fields are ignored."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("response must be a JSON object")
    rid = _require(obj, "id", int, "")
    if "error" in obj:
        return BackendResponse(id=rid, error=_require(obj, "error", str, ""))
    items = _require(obj, "variations", list, "")
    variations = []
    for i, item in enumerate(items):
        if not isinstance(item, str):
            raise ProtocolError("variation payload must be a string", f"variations[{i}]")
        try:
            variations.append(base64.b64decode(item, validate=True))
        except Exception as exc:
            raise ProtocolError(f"bad base64 payload: {exc}", f"variations[{i}]") from exc
    return BackendResponse(id=rid, variations=tuple(variations))


@dataclass
class ValidationResult:
    index: int
    accepted: bool
    reason: str = ""
    grid: Optional[PatternGrid] = None


def validate_variation(req: BackendRequest, resp: BackendResponse) -> list[ValidationResult]:
    """Accept or reject each returned variation.

    Rejection reasons: undecodable payload, dimension/pitch mismatch, or a
    change outside the requested mask. Applied unconditionally so a
    misbehaving backend can never inject an out-of-mask edit.
    """
    if resp.id != req.id:
        raise ProtocolError(f"response id {resp.id} does not match request id {req.id}", "id")
    if resp.error is not None:
        raise BackendError(f"backend error: {resp.error}")
    parent = load_pattern(req.pattern)
    mask = MaskSpec(rects=req.mask)
    results = []
    for i, payload in enumerate(resp.variations):
        try:
            grid = load_pattern(payload)
        except Exception as exc:
            results.append(ValidationResult(i, False, f"undecodable: {exc}"))
            continue
        try:
            preserved = assert_mask_preserving(parent, grid, mask)
        except Exception as exc:
            results.append(ValidationResult(i, False, str(exc)))
            continue
        if not preserved:
            results.append(ValidationResult(i, False, "changed pixels outside mask"))
        else:
            results.append(ValidationResult(i, True, grid=grid))
    return results


def parse_handshake(line: str) -> tuple[str, int]:
    """Returns (backend name, protocol version) from the handshake line."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"handshake is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("protocol") != PROTOCOL_NAME:
        raise ProtocolError(f"not a {PROTOCOL_NAME} handshake: {line!r}", "protocol")
    version = _require(obj, "version", int, "")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}", "version")
    return _require(obj, "name", str, ""), version


class BackendSession:
    """A subprocess speaking the backend protocol; one request in flight."""

    def __init__(self, command: str):
        self.command = command
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendError(f"cannot start backend {command!r}: {exc}") from exc
        line = self.proc.stdout.readline()
        if not line:
            raise BackendError(f"backend {command!r} exited before handshake")
        self.name, self.version = parse_handshake(line)
        self._next_id = 1

    def request(self, pattern: PatternGrid, mask: MaskSpec, n: int, seed: int) -> list[ValidationResult]:
        """Send one request and validate every returned variation."""
        req = BackendRequest(
            id=self._next_id,
            pattern=canonical_p4(pattern),
            mask=mask.rects,
            num_variations=n,
            seed=seed,
        )
        self._next_id += 1
        try:
            self.proc.stdin.write(encode_request(req) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"backend {self.name!r} pipe failure: {exc}") from exc
        if not line:
            raise BackendError(f"backend {self.name!r} closed its stream mid-request")
        return validate_variation(req, parse_response(line))

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_stdio(name: str, vary: Callable[[BackendRequest], list[bytes]]) -> None:
    """Run a backend loop on this process's stdio.

    ``vary`` maps a request to a list of canonical P4 payloads; exceptions
    become error responses. Intended for implementing external backends.
    """
    sys.stdout.write(
        json.dumps({"protocol": PROTOCOL_NAME, "version": PROTOCOL_VERSION, "name": name}) + "\n"
    )
    sys.stdout.flush()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        rid = -1
        try:
            req = parse_request(line)
            rid = req.id
            resp = BackendResponse(id=req.id, variations=tuple(vary(req)))
        except Exception as exc:
            resp = BackendResponse(id=rid, error=str(exc))
        sys.stdout.write(encode_response(resp) + "\n")
        sys.stdout.flush()
