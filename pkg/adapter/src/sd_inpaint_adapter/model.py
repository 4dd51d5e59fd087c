"""Inpainting models behind one interface.

``synthetic`` is a dependency-free stand-in for a diffusion inpainter: it
renders the masked region as a continuous grayscale field and thresholds at
mid-gray, exactly the way the real model's RGB output is binarized. With
finetuned weights (run-length statistics learned from starter patterns) it
draws track-shaped geometry instead of free-form blobs, so a base-versus-
finetuned comparison is meaningful without a GPU.

``diffusers:<model-id>`` loads a real pretrained inpainting pipeline; the
heavyweight libraries are imported lazily so the synthetic path never needs
them.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MID_GRAY = 0.5


class CapabilityError(RuntimeError):
    """The requested model needs hardware or libraries that are missing."""


@dataclass(frozen=True)
class AdapterConfig:
    model: str
    weights: Optional[str] = None
    device: str = "cpu"
    steps: int = 20
    guidance: float = 7.5
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.model:
            raise ValueError("model id must be non-empty")


def _mask_array(shape: tuple[int, int], rects: list[dict]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for r in rects:
        mask[r["y0"] : r["y1"], r["x0"] : r["x1"]] = True
    return mask


def _box_blur(field: np.ndarray, radius: int) -> np.ndarray:
    pad = np.pad(field, radius, mode="edge")
    cum = np.cumsum(np.cumsum(pad, axis=0), axis=1)
    cum = np.pad(cum, ((1, 0), (1, 0)))
    k = 2 * radius + 1
    h, w = field.shape
    return (
        cum[k : k + h, k : k + w]
        - cum[0:h, k : k + w]
        - cum[k : k + h, 0:w]
        + cum[0:h, 0:w]
    ) / (k * k)


class SyntheticInpainter:
    """Deterministic grayscale-field inpainter with optional learned weights."""

    name = "sd-inpaint-adapter"

    def __init__(self, config: AdapterConfig):
        self.config = config
        self.stats = None
        if config.weights:
            path = Path(config.weights)
            if not path.exists():
                raise CapabilityError(f"weights file {config.weights!r} not found")
            self.stats = json.loads(path.read_text())
            for key in ("track_widths", "track_gaps", "segment_heights"):
                if key not in self.stats:
                    raise CapabilityError(f"weights file missing {key!r}")

    def _sample_lengths(self, rng, hist_key, span, fallback):
        hist = self.stats[hist_key] if self.stats else None
        lengths = []
        total = 0
        while total < span:
            if hist:
                values = [int(v) for v in hist.keys()]
                weights = np.array([hist[k] for k in hist.keys()], dtype=float)
                pick = int(rng.choice(values, p=weights / weights.sum()))
            else:
                pick = int(rng.integers(*fallback))
            lengths.append(pick)
            total += pick
        return lengths

    def _field(self, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
        h, w = shape
        if self.stats is None:
            # base model analog: smooth random blobs around mid-gray
            return _box_blur(rng.random((h, w)), radius=2) + rng.normal(0, 0.02, (h, w))
        # finetuned analog: vertical tracks with learned widths/gaps/segments
        out = np.zeros((h, w))
        x = 0
        metal = bool(rng.integers(2))
        while x < w:
            key = "track_widths" if metal else "track_gaps"
            length = self._sample_lengths(rng, key, 1, (2, 8))[0]
            if metal:
                column = np.zeros(h)
                y = 0
                seg_on = bool(rng.integers(2))
                while y < h:
                    seg = self._sample_lengths(rng, "segment_heights", 1, (4, 16))[0]
                    column[y : y + seg] = 1.0 if seg_on else 0.0
                    seg_on = not seg_on
                    y += seg
                out[:, x : x + length] = column[:, None]
            x += length
            metal = not metal
        return out

    def inpaint(
        self,
        pixels: np.ndarray,
        rects: list[dict],
        num_variations: int,
        seed: int,
    ) -> list[np.ndarray]:
        mask = _mask_array(pixels.shape, rects)
        variations = []
        for index in range(num_variations):
            rng = np.random.default_rng([abs(int(seed)), index])
            painted = self._field(pixels.shape, rng)
            binary = (painted >= MID_GRAY).astype(np.uint8)
            out = pixels.copy()
            out[mask] = binary[mask]  # unmasked source pixels always copied back
            variations.append(out)
        return variations


class DiffusersInpainter:
    """Wrapper over a pretrained diffusion inpainting pipeline (lazy import)."""

    def __init__(self, config: AdapterConfig, model_id: str):
        self.config = config
        self.name = model_id
        try:
            import torch  # noqa: F401
            from diffusers import AutoPipelineForInpainting
        except ImportError as exc:
            raise CapabilityError(
                f"model {model_id!r} needs torch and diffusers installed "
                "(pip install 'sd-inpaint-adapter[diffusion]')"
            ) from exc
        import torch
        from diffusers import AutoPipelineForInpainting

        self._torch = torch
        self.pipe = AutoPipelineForInpainting.from_pretrained(model_id)
        if config.weights:
            self.pipe.unet.load_attn_procs(config.weights)
        self.pipe.to(config.device)

    def inpaint(self, pixels, rects, num_variations, seed):
        from PIL import Image

        h, w = pixels.shape
        image = Image.fromarray((pixels * 255).astype(np.uint8)).convert("RGB")
        mask = Image.fromarray((_mask_array(pixels.shape, rects) * 255).astype(np.uint8))
        out = []
        for index in range(num_variations):
            generator = self._torch.Generator(self.config.device).manual_seed(seed + index)
            result = self.pipe(
                prompt=self.config.extra.get("prompt", "layout pattern"),
                image=image,
                mask_image=mask,
                num_inference_steps=self.config.steps,
                guidance_scale=self.config.guidance,
                generator=generator,
            ).images[0]
            gray = np.asarray(result.convert("L"), dtype=float) / 255.0
            binary = (gray[:h, :w] >= MID_GRAY).astype(np.uint8)
            merged = pixels.copy()
            region = _mask_array(pixels.shape, rects)
            merged[region] = binary[region]
            out.append(merged)
        return out


def make_inpainter(config: AdapterConfig):
    if config.model == "synthetic":
        return SyntheticInpainter(config)
    if config.model.startswith("diffusers:"):
        return DiffusersInpainter(config, config.model.split(":", 1)[1])
    raise CapabilityError(f"unknown model {config.model!r}; use synthetic or diffusers:<id>")


def run_lengths(line: np.ndarray) -> list[tuple[int, int]]:
    """(value, length) runs of one 1-D binary array."""
    out = []
    start = 0
    for i in range(1, len(line) + 1):
        if i == len(line) or line[i] != line[start]:
            out.append((int(line[start]), i - start))
            start = i
    return out


def finetune(
    starters_dir: str,
    out_path: str,
    learning_rate: float = 5e-6,
    prior_lambda: float = 1.0,
    prompt: str = "layout pattern",
    model: str = "synthetic",
) -> str:
    """Few-shot adaptation from a directory of starter PBMs.

    The synthetic path distills the starters into run-length histograms
    (track widths, gaps, vertical segment heights) the sampler then draws
    from; prior preservation is approximated by mixing a flat prior into
    every histogram with weight ``prior_lambda``. A real diffusion finetune
    requires the optional GPU stack and raises a capability error otherwise.
    """
    from .pbm import load_pbm

    src = Path(starters_dir)
    files = sorted(src.glob("*.pbm")) if src.is_dir() else []
    if not files:
        raise ValueError(f"no starter patterns in {starters_dir!r}")
    if model != "synthetic":
        raise CapabilityError(
            f"finetuning {model!r} needs a GPU diffusion training stack; "
            "only the synthetic model can be tuned in this environment"
        )
    widths: Counter = Counter()
    gaps: Counter = Counter()
    segments: Counter = Counter()
    for f in files:
        pixels, _pitch = load_pbm(f.read_bytes())
        for row in pixels[:: max(1, pixels.shape[0] // 16)]:
            for value, length in run_lengths(row):
                (widths if value else gaps)[length] += 1
        for col in pixels.T[:: max(1, pixels.shape[1] // 16)]:
            for value, length in run_lengths(col):
                if value:
                    segments[length] += 1
    for counter in (widths, gaps, segments):
        if not counter:
            counter[4] = 1
        flat = max(1, round(prior_lambda * sum(counter.values()) / max(len(counter), 1) / 10))
        for key in list(counter):
            counter[key] += flat
    weights = {
        "track_widths": {str(k): v for k, v in sorted(widths.items())},
        "track_gaps": {str(k): v for k, v in sorted(gaps.items())},
        "segment_heights": {str(k): v for k, v in sorted(segments.items())},
        "hyperparams": {
            "learning_rate": learning_rate,
            "prior_lambda": prior_lambda,
            "prompt": prompt,
            "starters": len(files),
        },
    }
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(weights, indent=2))
    return str(out)
