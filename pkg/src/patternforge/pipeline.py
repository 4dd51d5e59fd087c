"""Iterative generation pipeline: backends, schedules, dedup, and reporting.

Round 0 runs every starter against all ten predefined masks. Each later
round selects representative patterns from the library, advances each
lineage's mask schedule (sets alternate between rounds, indices cycle), and
inserts only new, DR-clean, mask-preserving results.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import drc
from .backend import BackendSession, ValidationResult, validate_variation, BackendRequest, BackendResponse
from .denoise import denoise
from .errors import BackendError, PatternForgeError
from .grid import (
    MASK_SET_CUSTOM,
    MASK_SET_DEFAULT,
    MASK_SET_HORIZONTAL,
    MaskSpec,
    PatternGrid,
    canonical_p4,
)
from .masks import MASKS_PER_SET, all_builtin_masks, builtin_mask_set
from .metrics import PatternLibrary, Provenance, density, h1, h2, silhouette
from .selection import SelectionConfig, select_representatives
from .stochastic import stochastic_vary

BUILTIN_STOCHASTIC = "builtin:stochastic"
BUILTIN_IDENTITY = "builtin:identity"


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs of one pipeline run; counts are all >= 1."""

    iterations: int
    variations_per_mask: int
    rules: drc.RuleSet
    k_select: int
    masks_per_pattern: int = 1
    denoise_threshold: int = 2
    seed: int = 0
    backend: str = BUILTIN_STOCHASTIC
    backend_params: dict = field(default_factory=dict)
    min_density: float = 0.40
    silhouette_k: Optional[int] = None

    def __post_init__(self):
        for name in ("iterations", "variations_per_mask", "k_select", "masks_per_pattern"):
            if getattr(self, name) < 1:
                raise PatternForgeError(f"{name} must be >= 1")

    @classmethod
    def from_json(cls, text: str, rules: drc.RuleSet, **overrides) -> "GenerationConfig":
        obj = json.loads(text)
        obj.update(overrides)
        return cls(rules=rules, **obj)


def derive_seed(root_seed: int, *parts) -> int:
    """Stable 63-bit per-call seed from the root seed and a context tuple."""
    digest = hashlib.sha256(repr((root_seed, *parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class VariationSource:
    """Adapter over a backend: returns validated, mask-preserving variations."""

    name = "base"

    def generate(self, pattern: PatternGrid, mask: MaskSpec, n: int, seed: int) -> list[ValidationResult]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class _FunctionSource(VariationSource):
    """Runs a local variation function, then the standard protocol validation."""

    def __init__(self, name: str, fn: Callable[[PatternGrid, MaskSpec, int, int], list[PatternGrid]]):
        self.name = name
        self._fn = fn

    def generate(self, pattern, mask, n, seed):
        grids = self._fn(pattern, mask, n, seed)
        req = BackendRequest(
            id=0, pattern=canonical_p4(pattern), mask=mask.rects, num_variations=n, seed=seed
        )
        resp = BackendResponse(id=0, variations=tuple(canonical_p4(g) for g in grids))
        return validate_variation(req, resp)


class ExecSource(VariationSource):
    """External backend subprocess; one session per worker thread."""

    def __init__(self, command: str):
        self.command = command
        self._local = threading.local()
        self._sessions: list[BackendSession] = []
        self._lock = threading.Lock()
        session = self._session()
        self.name = session.name

    def _session(self) -> BackendSession:
        session = getattr(self._local, "session", None)
        if session is None:
            session = BackendSession(self.command)
            self._local.session = session
            with self._lock:
                self._sessions.append(session)
        return session

    def generate(self, pattern, mask, n, seed):
        return self._session().request(pattern, mask, n, seed)

    def close(self):
        with self._lock:
            for s in self._sessions:
                s.close()
            self._sessions.clear()


def make_source(backend: str, cfg: GenerationConfig) -> VariationSource:
    """Resolve a backend spec: ``builtin:stochastic``, ``builtin:identity``,
    or ``exec:<command>``."""
    if backend == BUILTIN_STOCHASTIC:
        jitter = float(cfg.backend_params.get("jitter_rate", 0.1))
        hint = cfg.rules if cfg.backend_params.get("use_rules_hint", True) else None

        def fn(pattern, mask, n, seed):
            return stochastic_vary(pattern, mask, n, seed, jitter_rate=jitter, rules_hint=hint)

        return _FunctionSource("stochastic", fn)
    if backend == BUILTIN_IDENTITY:
        return _FunctionSource("identity", lambda pattern, mask, n, seed: [pattern] * n)
    if backend.startswith("exec:"):
        return ExecSource(backend[len("exec:") :])
    raise PatternForgeError(f"unknown backend {backend!r}")


def schedule_masks(parent_prov: Provenance, dims: tuple[int, int], count: int) -> list[MaskSpec]:
    """Next ``count`` masks for a lineage: alternate set kind, cycle indices."""
    last = parent_prov.mask
    if last is None or last.set_id == MASK_SET_CUSTOM:
        next_set, base = MASK_SET_DEFAULT, -1
    else:
        next_set = MASK_SET_HORIZONTAL if last.set_id == MASK_SET_DEFAULT else MASK_SET_DEFAULT
        base = last.index
    mask_set = builtin_mask_set(next_set, dims)
    return [mask_set.masks[(base + 1 + j) % MASKS_PER_SET] for j in range(count)]


@dataclass
class IterationStats:
    iteration: int
    attempts: int = 0
    accepted: int = 0
    rejected: int = 0
    failed: int = 0
    legal: int = 0
    inserted: int = 0
    unique_total: int = 0
    h1_bits: float = 0.0
    h2_bits: float = 0.0
    mean_density: float = 0.0
    silhouette: Optional[float] = None

    @property
    def success_rate(self) -> float:
        return self.legal / self.attempts if self.attempts else 0.0

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items()}
        out["success_rate"] = self.success_rate
        return out


@dataclass
class PipelineReport:
    backend: str
    rows: list[IterationStats] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"backend": self.backend, "iterations": [r.to_json() for r in self.rows]}, indent=2
        )


@dataclass(frozen=True)
class _Task:
    parent_hash: str
    parent: PatternGrid
    mask: MaskSpec
    n: int
    seed: int


def _run_task(task: _Task, source: VariationSource, cfg: GenerationConfig):
    """Generate, validate, denoise, and DR-check one (parent, mask) batch.

    Returns (attempted, accepted, rejected, failed, items) where items are
    (variation_index, denoised grid or None for an exact parent duplicate,
    legal flag) in variation order.
    """
    try:
        results = source.generate(task.parent, task.mask, task.n, task.seed)
    except BackendError:
        try:
            results = source.generate(task.parent, task.mask, task.n, task.seed)
        except BackendError:
            return task.n, 0, 0, task.n, []
    items = []
    accepted = rejected = 0
    parent_bytes = canonical_p4(task.parent)
    for r in results:
        if not r.accepted:
            rejected += 1
            continue
        accepted += 1
        if canonical_p4(r.grid) == parent_bytes:
            items.append((r.index, None, True))  # parent is legal by precondition
            continue
        cleaned = denoise(
            r.grid,
            task.parent,
            threshold=cfg.denoise_threshold,
            seed=derive_seed(cfg.seed, "denoise", task.parent_hash, task.mask.set_id, task.mask.index, r.index),
        )
        items.append((r.index, cleaned, drc.is_legal(cleaned, cfg.rules)))
    return task.n, accepted, rejected, 0, items


def run_pipeline(
    starters: list[PatternGrid],
    cfg: GenerationConfig,
    jobs: int = 1,
    source: Optional[VariationSource] = None,
) -> tuple[PatternLibrary, PipelineReport]:
    """Run the full iterative generation loop.

    Library contents are deterministic for a fixed ``cfg.seed`` and backend,
    independent of ``jobs``: per-call seeds derive from stable hashes and
    results merge in canonical (parent, mask, variation) order.
    """
    if not starters:
        raise PatternForgeError("at least one starter pattern is required")
    for i, s in enumerate(starters):
        if not drc.is_legal(s, cfg.rules):
            raise PatternForgeError(f"starter {i} is not legal under the configured rules")

    own_source = source is None
    if own_source:
        source = make_source(cfg.backend, cfg)
    report = PipelineReport(backend=source.name)
    lib = PatternLibrary()
    for s in starters:
        lib.add(s, Provenance(iteration=0, backend="starter"))
    dims = (starters[0].width, starters[0].height)

    try:
        for iteration in range(cfg.iterations + 1):
            if iteration == 0:
                parents = list(lib.entries)
                plan = [(e, all_builtin_masks(dims)) for e in parents]
            else:
                eligible = sum(1 for e in lib.entries if density(e.grid) >= cfg.min_density)
                if eligible == 0:
                    break
                sel_cfg = SelectionConfig(
                    k=min(cfg.k_select, eligible),
                    min_density=cfg.min_density,
                    seed=derive_seed(cfg.seed, "select", iteration),
                )
                picked = select_representatives(lib, sel_cfg)
                plan = [
                    (lib.entries[i], schedule_masks(lib.entries[i].provenance, dims, cfg.masks_per_pattern))
                    for i in picked
                ]

            tasks = [
                _Task(
                    parent_hash=entry.hash,
                    parent=entry.grid,
                    mask=mask,
                    n=cfg.variations_per_mask,
                    seed=derive_seed(cfg.seed, "vary", entry.hash, mask.set_id, mask.index, iteration),
                )
                for entry, masks in plan
                for mask in masks
            ]

            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    outcomes = list(pool.map(lambda t: _run_task(t, source, cfg), tasks))
            else:
                outcomes = [_run_task(t, source, cfg) for t in tasks]

            stats = IterationStats(iteration=iteration)
            for task, (attempted, accepted, rejected, failed, items) in zip(tasks, outcomes):
                stats.attempts += attempted
                stats.accepted += accepted
                stats.rejected += rejected
                stats.failed += failed
                for _index, cleaned, legal in items:
                    if not legal:
                        continue
                    stats.legal += 1
                    if cleaned is None:
                        continue  # exact duplicate of its parent
                    _entry, added = lib.add(
                        cleaned,
                        Provenance(
                            iteration=iteration,
                            parent_id=task.parent_hash,
                            mask=task.mask,
                            backend=source.name,
                        ),
                    )
                    if added:
                        stats.inserted += 1

            stats.unique_total = len(lib)
            stats.h1_bits = h1(lib)
            stats.h2_bits = h2(lib)
            stats.mean_density = float(sum(density(g) for g in lib.grids()) / len(lib))
            if cfg.silhouette_k and len(lib) > cfg.silhouette_k >= 2:
                stats.silhouette = silhouette(
                    lib, cfg.silhouette_k, seed=derive_seed(cfg.seed, "silhouette", iteration)
                )
            report.rows.append(stats)
    finally:
        if own_source:
            source.close()
    return lib, report
