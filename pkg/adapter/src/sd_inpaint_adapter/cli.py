"""Command line entry: serve, finetune, compare."""

from __future__ import annotations

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from .model import AdapterConfig, CapabilityError, finetune, make_inpainter
from .pbm import load_pbm, save_pbm
from .protocol import serve


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sd-inpaint-adapter",
        description="Inpainting-model backend for layout pattern generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="speak the backend protocol on stdio")
    p_serve.add_argument("--model", default="synthetic", help="synthetic or diffusers:<model-id>")
    p_serve.add_argument("--weights", default=None, help="finetuned weights to load")
    p_serve.add_argument("--device", default="cpu")
    p_serve.add_argument("--steps", type=int, default=20)
    p_serve.add_argument("--guidance", type=float, default=7.5)

    p_tune = sub.add_parser("finetune", help="adapt the model to a set of starter patterns")
    p_tune.add_argument("--starters", required=True, help="directory of starter .pbm files")
    p_tune.add_argument("--out", required=True, help="output weights path")
    p_tune.add_argument("--model", default="synthetic")
    p_tune.add_argument("--learning-rate", type=float, default=5e-6)
    p_tune.add_argument("--prior-lambda", type=float, default=1.0)
    p_tune.add_argument("--prompt", default="layout pattern")

    p_cmp = sub.add_parser("compare", help="base vs finetuned legality report")
    p_cmp.add_argument("--starters", required=True, help="directory of starter .pbm files")
    p_cmp.add_argument("--weights", required=True, help="finetuned weights path")
    p_cmp.add_argument("--rules", required=True, help="rule set name or file for the DRC check")
    p_cmp.add_argument("--num", type=int, default=4, help="variations per starter per model")
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    return parser


def _center_mask(shape: tuple[int, int]) -> list[dict]:
    h, w = shape
    return [{"x0": w // 4, "y0": h // 4, "x1": w - w // 4, "y1": h - h // 4}]


def _legal_fraction(variations, pitch, rules: str, drc_cmd: str, workdir: Path) -> float:
    legal = 0
    for i, pixels in enumerate(variations):
        path = workdir / f"var_{i}.pbm"
        path.write_bytes(save_pbm(pixels, pitch))
        result = subprocess.run(
            [drc_cmd, "drc", "--input", str(path), "--rules", rules],
            capture_output=True,
        )
        if result.returncode == 0:
            legal += 1
        elif result.returncode != 2:
            raise RuntimeError(
                f"drc check failed ({result.returncode}): {result.stderr.decode(errors='replace')}"
            )
    return legal / max(len(variations), 1)


def _cmd_compare(args) -> int:
    starters = sorted(Path(args.starters).glob("*.pbm"))
    if not starters:
        print(f"error: no starter patterns in {args.starters!r}", file=sys.stderr)
        return 1
    base = make_inpainter(AdapterConfig(model="synthetic"))
    tuned = make_inpainter(AdapterConfig(model="synthetic", weights=args.weights))
    drc_cmd = shutil.which("patternforge")
    report = {"rules": args.rules, "num_per_starter": args.num, "starters": [], "note": None}
    if drc_cmd is None:
        report["note"] = "patternforge CLI not on PATH; legality not evaluated"
    totals = {"base": [], "finetuned": []}
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        for i, path in enumerate(starters):
            pixels, pitch = load_pbm(path.read_bytes())
            mask = _center_mask(pixels.shape)
            entry = {"starter": path.name}
            for label, model in (("base", base), ("finetuned", tuned)):
                vars_ = model.inpaint(pixels, mask, args.num, args.seed + i)
                entry[f"{label}_density"] = float(np.mean([v.mean() for v in vars_]))
                if drc_cmd:
                    frac = _legal_fraction(vars_, pitch, args.rules, drc_cmd, workdir)
                    entry[f"{label}_legal_fraction"] = frac
                    totals[label].append(frac)
            report["starters"].append(entry)
    for label, values in totals.items():
        report[f"{label}_legal_fraction"] = float(np.mean(values)) if values else None
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def entry(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            config = AdapterConfig(
                model=args.model,
                weights=args.weights,
                device=args.device,
                steps=args.steps,
                guidance=args.guidance,
            )
            serve(make_inpainter(config))
            return 0
        if args.command == "finetune":
            out = finetune(
                args.starters,
                args.out,
                learning_rate=args.learning_rate,
                prior_lambda=args.prior_lambda,
                prompt=args.prompt,
                model=args.model,
            )
            print(f"wrote weights to {out}")
            return 0
        return _cmd_compare(args)
    except (CapabilityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entry())
