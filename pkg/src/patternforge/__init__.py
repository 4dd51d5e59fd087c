"""patternforge: layout-pattern generation toolkit.

Squish codec, pixel-level DRC, template denoising, diversity metrics,
PCA-based selection, mask scheduling, an iterative generation loop with
pluggable variation backends, and a constraint-solver legalization baseline.
"""

from .errors import (
    BackendError,
    BoundsError,
    DimensionMismatchError,
    MetricsError,
    PatternForgeError,
    PbmParseError,
    ProtocolError,
    QuantizationError,
    RuleConfigError,
    SelectionError,
    TopologyError,
)
from .grid import (
    MaskSpec,
    PatternGrid,
    Rect,
    canonical_p4,
    crop,
    load_pattern,
    save_pattern,
    split_clips,
)
from .squish import SquishPattern, complexity, decode, encode
from .drc import RuleSet, Violation, check, is_legal, load_preset
from .denoise import denoise
from .metrics import PatternLibrary, Provenance, canonical_hash, density, h1, h2, noise_level
from .selection import SelectionConfig, select_representatives
from .masks import SKIP, all_builtin_masks, builtin_mask_set, mask_from_violations
from .backend import BackendRequest, BackendResponse, BackendSession, serve_stdio
from .pipeline import GenerationConfig, run_pipeline
from .legalize import SolveOutcome, bench, derive_constraints, solve

__version__ = "1.0.0"

__all__ = [
    "BackendError",
    "BackendRequest",
    "BackendResponse",
    "BackendSession",
    "BoundsError",
    "DimensionMismatchError",
    "GenerationConfig",
    "MaskSpec",
    "MetricsError",
    "PatternForgeError",
    "PatternGrid",
    "PatternLibrary",
    "PbmParseError",
    "ProtocolError",
    "Provenance",
    "QuantizationError",
    "Rect",
    "RuleConfigError",
    "RuleSet",
    "SKIP",
    "SelectionConfig",
    "SelectionError",
    "SolveOutcome",
    "SquishPattern",
    "TopologyError",
    "Violation",
    "all_builtin_masks",
    "bench",
    "builtin_mask_set",
    "canonical_hash",
    "canonical_p4",
    "check",
    "complexity",
    "crop",
    "decode",
    "denoise",
    "density",
    "derive_constraints",
    "encode",
    "h1",
    "h2",
    "is_legal",
    "load_pattern",
    "load_preset",
    "mask_from_violations",
    "noise_level",
    "run_pipeline",
    "save_pattern",
    "select_representatives",
    "serve_stdio",
    "solve",
    "split_clips",
]
