"""Diversity and quality metrics over pattern libraries.

Covers canonical hashing and dedup, the two entropy-based diversity scores
(over complexity tuples and over delta-vector geometry), density and edge
noise measures, PCA, and a seeded k-means silhouette analysis.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import MetricsError, PatternForgeError
from .grid import MaskSpec, PatternGrid, canonical_p4, load_pattern, save_pattern
from .squish import complexity, encode


def canonical_hash(grid: PatternGrid) -> str:
    """SHA-256 of the canonical P4 bytes; equal grids <=> equal hashes."""
    return hashlib.sha256(canonical_p4(grid)).hexdigest()


@dataclass(frozen=True)
class Provenance:
    """Where a library entry came from."""

    iteration: int
    parent_id: Optional[str] = None
    mask: Optional[MaskSpec] = None
    backend: str = "starter"

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "parent_id": self.parent_id,
            "mask": self.mask.to_json() if self.mask else None,
            "backend": self.backend,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Provenance":
        mask = obj.get("mask")
        return cls(
            iteration=int(obj["iteration"]),
            parent_id=obj.get("parent_id"),
            mask=MaskSpec.from_json(mask) if mask else None,
            backend=obj.get("backend", "starter"),
        )


@dataclass(frozen=True)
class LibraryEntry:
    grid: PatternGrid
    hash: str
    provenance: Provenance


class PatternLibrary:
    """Deduplicated, insertion-ordered collection of patterns with provenance."""

    def __init__(self):
        self.entries: list[LibraryEntry] = []
        self._by_hash: dict[str, LibraryEntry] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, grid: PatternGrid) -> bool:
        return canonical_hash(grid) in self._by_hash

    def add(self, grid: PatternGrid, provenance: Provenance) -> tuple[LibraryEntry, bool]:
        """Insert unless a byte-identical pattern is present; returns (entry, added)."""
        h = canonical_hash(grid)
        existing = self._by_hash.get(h)
        if existing is not None:
            if existing.grid != grid:  # hash collision guard
                raise MetricsError(f"hash collision on {h}")
            return existing, False
        entry = LibraryEntry(grid=grid, hash=h, provenance=provenance)
        self.entries.append(entry)
        self._by_hash[h] = entry
        return entry, True

    def grids(self) -> list[PatternGrid]:
        return [e.grid for e in self.entries]

    def hashes(self) -> set[str]:
        return set(self._by_hash)

    # -- persistence: one canonical P4 file per entry plus a provenance log --

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        records = []
        for i, e in enumerate(self.entries):
            name = f"{i:06d}.pbm"
            (directory / name).write_bytes(save_pattern(e.grid, "P4"))
            records.append({"file": name, "hash": e.hash, "provenance": e.provenance.to_json()})
        (directory / "provenance.json").write_text(json.dumps(records, indent=2))

    @classmethod
    def load(cls, directory: str | Path) -> "PatternLibrary":
        directory = Path(directory)
        lib = cls()
        prov_file = directory / "provenance.json"
        if prov_file.exists():
            for rec in json.loads(prov_file.read_text()):
                grid = load_pattern((directory / rec["file"]).read_bytes())
                lib.add(grid, Provenance.from_json(rec["provenance"]))
        else:
            for path in sorted(directory.glob("*.pbm")):
                lib.add(load_pattern(path.read_bytes()), Provenance(iteration=0))
        return lib


def _entropy_bits(group_sizes: Iterable[int]) -> float:
    sizes = np.array(list(group_sizes), dtype=float)
    p = sizes / sizes.sum()
    return float(-(p * np.log2(p)).sum())


def h1(lib: PatternLibrary) -> float:
    """Shannon entropy (bits) of the complexity-tuple distribution."""
    if not lib.entries:
        raise MetricsError("h1 undefined for an empty library")
    groups = Counter(complexity(encode(g)) for g in lib.grids())
    return _entropy_bits(groups.values())


def h2(lib: PatternLibrary) -> float:
    """Shannon entropy (bits) of the exact (delta_x, delta_y) distribution."""
    if not lib.entries:
        raise MetricsError("h2 undefined for an empty library")
    groups = Counter((encode(g).delta_x, encode(g).delta_y) for g in lib.grids())
    return _entropy_bits(groups.values())


def density(grid: PatternGrid) -> float:
    """Metal fraction of the raster."""
    return grid.density()


def noise_level(grid: PatternGrid) -> float:
    """Fraction of pixels with >= 3 of 4 orthogonal neighbors of opposite value.

    Out-of-bounds neighbors count as same-valued, so borders are not
    spuriously noisy.
    """
    px = grid.pixels
    padded = np.pad(px, 1, mode="edge")
    opposite = sum(
        (np.roll(padded, shift, axis=axis)[1:-1, 1:-1] != px).astype(np.int8)
        for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1))
    )
    return float((opposite >= 3).mean())


@dataclass(frozen=True)
class PcaModel:
    """Mean-centered principal decomposition of flattened patterns."""

    mean: np.ndarray
    components: np.ndarray  # orthonormal rows, one per non-zero singular value
    explained_variance_ratio: np.ndarray
    retained_count: int

    def transform(self, data: np.ndarray, retained_only: bool = True) -> np.ndarray:
        comps = self.components[: self.retained_count] if retained_only else self.components
        return (np.asarray(data, dtype=float) - self.mean) @ comps.T

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        comps = self.components[: projected.shape[-1]]
        return projected @ comps + self.mean


def pca_fit(data: np.ndarray, threshold: float = 0.9) -> PcaModel:
    """Fit PCA keeping the smallest component count reaching ``threshold``
    cumulative explained variance.

    Uses the thin SVD of the centered sample matrix, so the cost is governed
    by the sample count when there are fewer samples than pixels.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise MetricsError("pca_fit needs a 2-D array with at least 2 samples")
    if not 0 < threshold <= 1:
        raise MetricsError(f"threshold must be in (0, 1], got {threshold}")
    mean = data.mean(axis=0)
    centered = data - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-12:
        raise MetricsError("rank-0 data: all samples identical")
    keep = s > s[0] * 1e-10
    s, vt = s[keep], vt[keep]
    var = s**2
    ratios = var / var.sum()
    retained = int(np.searchsorted(np.cumsum(ratios), threshold - 1e-12) + 1)
    retained = min(retained, len(ratios))
    return PcaModel(mean=mean, components=vt, explained_variance_ratio=ratios, retained_count=retained)


def flatten_grids(grids: list[PatternGrid]) -> np.ndarray:
    """Stack grids into an (n, width*height) float matrix."""
    if not grids:
        raise MetricsError("no grids to flatten")
    shape = (grids[0].height, grids[0].width)
    if any((g.height, g.width) != shape for g in grids):
        raise MetricsError("grids must share a shape for vector metrics")
    return np.stack([g.pixels.ravel().astype(float) for g in grids])


def kmeans(data: np.ndarray, k: int, seed: int, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray, float]:
    """Seeded k-means++ with Lloyd iterations.

    Returns (labels, centers, inertia). Deterministic for a fixed seed; an
    emptied cluster is re-seeded with the point farthest from its center.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if not 2 <= k < n:
        raise MetricsError(f"need 2 <= k < samples, got k={k}, n={n}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = data[rng.integers(n)]
        else:
            centers[i] = data[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((data - centers[i]) ** 2).sum(axis=1))

    labels = np.full(n, -1)
    for _ in range(max_iter):
        dists = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for i in range(k):
            members = data[labels == i]
            if len(members):
                centers[i] = members.mean(axis=0)
            else:
                centers[i] = data[dists.min(axis=1).argmax()]
    inertia = float(((data - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def silhouette_score(data: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over samples, Euclidean; singleton clusters score 0."""
    data = np.asarray(data, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise MetricsError("silhouette needs at least 2 clusters")
    dists = np.sqrt(((data[:, None, :] - data[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(len(data))
    for i in range(len(data)):
        own = labels == labels[i]
        n_own = own.sum() - 1
        if n_own == 0:
            continue
        a = dists[i, own].sum() / n_own
        b = min(dists[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def silhouette(lib: PatternLibrary, k: int, seed: int, ev_threshold: float = 0.9) -> float:
    """PCA-reduce the library, k-means it, and return the mean silhouette."""
    grids = lib.grids()
    if k < 2:
        raise MetricsError(f"k must be >= 2, got {k}")
    if k >= len(grids):
        raise MetricsError(f"k={k} must be below unique pattern count {len(grids)}")
    model = pca_fit(flatten_grids(grids), ev_threshold)
    projected = model.transform(flatten_grids(grids))
    labels, _, _ = kmeans(projected, k, seed)
    return silhouette_score(projected, labels)
