"""PCA-based representative pattern selection with density constraints.

Greedy farthest-point coverage in PCA space: start from a seeded random
eligible entry, then repeatedly take the entry maximizing the summed
Euclidean distance to everything already selected. Entries below the
density floor are never eligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SelectionError
from .metrics import PatternLibrary, density, flatten_grids, pca_fit


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    ev_threshold: float = 0.9
    min_density: float = 0.40
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise SelectionError(f"k must be >= 1, got {self.k}")
        if not 0 < self.ev_threshold <= 1:
            raise SelectionError(f"ev_threshold must be in (0, 1], got {self.ev_threshold}")


def select_representatives(lib: PatternLibrary, cfg: SelectionConfig) -> list[int]:
    """Indices (into ``lib.entries``) of ``cfg.k`` representatives, in selection order.

    Deterministic for a fixed seed: only the initial pick is random; every
    later argmax breaks ties on the lowest entry index.
    """
    eligible = [i for i, e in enumerate(lib.entries) if density(e.grid) >= cfg.min_density]
    if len(eligible) < cfg.k:
        raise SelectionError(
            f"need {cfg.k} entries with density >= {cfg.min_density}, only {len(eligible)} eligible"
        )
    if len(eligible) == 1:
        return eligible
    grids = [lib.entries[i].grid for i in eligible]
    model = pca_fit(flatten_grids(grids), cfg.ev_threshold)
    z = model.transform(flatten_grids(grids))

    rng = np.random.default_rng(cfg.seed)
    first = int(rng.integers(len(eligible)))
    chosen = [first]
    remaining = [i for i in range(len(eligible)) if i != first]
    sums = np.linalg.norm(z - z[first], axis=1)
    while len(chosen) < cfg.k:
        cand = np.array(remaining)
        best = cand[int(np.argmax(sums[cand]))]  # argmax keeps the lowest index on ties
        chosen.append(int(best))
        remaining.remove(int(best))
        sums += np.linalg.norm(z - z[best], axis=1)
    return [eligible[i] for i in chosen]
