"""Command-line surface.

Exit codes are stable and machine readable: 0 success, 1 usage or
configuration error, 2 design-rule violations found (``drc``), 3 backend or
protocol failure, 4 solver budget exhausted. Randomized commands need a
``--seed``; the PATTERNFORGE_SEED environment variable is honored only when
the flag is absent.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import drc, legalize, masks, metrics, pipeline, selection, squish
from .denoise import denoise as denoise_op
from .errors import BackendError, PatternForgeError, ProtocolError
from .grid import Rect, load_pattern, save_pattern, split_clips

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATIONS = 2
EXIT_BACKEND = 3
EXIT_BUDGET = 4

_PRESET_NAMES = ("default", "complex", "complex_discrete", "uni7")


def _load_rules(spec: str) -> drc.RuleSet:
    """A preset name or a path to a RuleSet JSON file."""
    if spec in _PRESET_NAMES and not Path(spec).exists():
        return drc.load_preset(spec)
    path = Path(spec)
    if not path.exists():
        raise click.UsageError(f"rules {spec!r}: no such file and not a preset name")
    return drc.RuleSet.from_json(path.read_text())


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("PATTERNFORGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(f"PATTERNFORGE_SEED must be an integer, got {env!r}")
    raise click.UsageError("a --seed is required (or set PATTERNFORGE_SEED)")


def _emit_text(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        click.echo(text)


def _emit_bytes(data: bytes, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)


@click.group()
def main():
    """Layout-pattern generation toolkit."""


@main.command()
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path())
def encode(input_, out):
    """Compress a PBM pattern into squish JSON."""
    sq = squish.encode(load_pattern(Path(input_).read_bytes()))
    _emit_text(sq.to_json(), out)


@main.command()
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--pitch", type=int, default=1, show_default=True)
@click.option("--format", "format_", type=click.Choice(["P1", "P4"]), default="P4", show_default=True)
@click.option("--out", type=click.Path())
def decode(input_, pitch, format_, out):
    """Expand squish JSON back into a PBM pattern."""
    sq = squish.SquishPattern.from_json(Path(input_).read_text())
    _emit_bytes(save_pattern(squish.decode(sq, pitch), format_), out)


@main.command("drc")
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--rules", required=True)
@click.option("--no-merge", is_flag=True, help="Report raw per-run violations without region fusion.")
@click.option("--out", type=click.Path())
@click.pass_context
def drc_cmd(ctx, input_, rules, no_merge, out):
    """Check a pattern; exits 2 when violations are found."""
    grid = load_pattern(Path(input_).read_bytes())
    violations = drc.check(grid, _load_rules(rules), merge=not no_merge)
    _emit_text(json.dumps([v.to_json() for v in violations], indent=2), out)
    if violations:
        ctx.exit(EXIT_VIOLATIONS)


@main.command("denoise")
@click.option("--template", required=True, type=click.Path(exists=True))
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path())
def denoise_cmd(template, input_, threshold, seed, out):
    """Snap a noisy pattern onto its template's scan-line structure."""
    cleaned = denoise_op(
        load_pattern(Path(input_).read_bytes()),
        load_pattern(Path(template).read_bytes()),
        threshold=threshold,
        seed=_resolve_seed(seed),
    )
    _emit_bytes(save_pattern(cleaned, "P4"), out)


@main.group("metrics")
def metrics_group():
    """Library metrics."""


@metrics_group.command("report")
@click.option("--library", required=True, type=click.Path(exists=True))
@click.option("--rules", required=True)
@click.option("--silhouette-k", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--csv", "csv_path", type=click.Path(), help="Also write a per-iteration CSV series.")
@click.option("--out", type=click.Path())
def metrics_report(library, rules, silhouette_k, seed, csv_path, out):
    """Diversity/quality report for a saved pattern library."""
    lib = metrics.PatternLibrary.load(library)
    if not len(lib):
        raise click.UsageError(f"library {library!r} is empty")
    ruleset = _load_rules(rules)
    report = {
        "unique": len(lib),
        "legal": sum(drc.is_legal(g, ruleset) for g in lib.grids()),
        "h1_bits": metrics.h1(lib),
        "h2_bits": metrics.h2(lib),
        "mean_density": float(sum(metrics.density(g) for g in lib.grids()) / len(lib)),
        "mean_noise": float(sum(metrics.noise_level(g) for g in lib.grids()) / len(lib)),
        "silhouette": None,
    }
    if silhouette_k is not None:
        report["silhouette"] = {
            "k": silhouette_k,
            "score": metrics.silhouette(lib, silhouette_k, seed=_resolve_seed(seed)),
        }
    if csv_path:
        import csv as csv_mod

        by_iter: dict[int, list] = {}
        for e in lib.entries:
            by_iter.setdefault(e.provenance.iteration, []).append(e)
        with open(csv_path, "w", newline="") as fh:
            writer = csv_mod.writer(fh)
            writer.writerow(["iteration", "patterns", "legal", "mean_density"])
            for it in sorted(by_iter):
                group = by_iter[it]
                writer.writerow(
                    [
                        it,
                        len(group),
                        sum(drc.is_legal(e.grid, ruleset) for e in group),
                        sum(metrics.density(e.grid) for e in group) / len(group),
                    ]
                )
    _emit_text(json.dumps(report, indent=2), out)


@main.command("select")
@click.option("--library", required=True, type=click.Path(exists=True))
@click.option("--k", required=True, type=int)
@click.option("--min-density", type=float, default=0.40, show_default=True)
@click.option("--ev-threshold", type=float, default=0.9, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path())
def select_cmd(library, k, min_density, ev_threshold, seed, out):
    """Print the ids (index and hash) of k representative patterns."""
    lib = metrics.PatternLibrary.load(library)
    cfg = selection.SelectionConfig(
        k=k, ev_threshold=ev_threshold, min_density=min_density, seed=_resolve_seed(seed)
    )
    picked = selection.select_representatives(lib, cfg)
    lines = [f"{i} {lib.entries[i].hash}" for i in picked]
    _emit_text("\n".join(lines), out)


@main.command("generate")
@click.option("--starters", required=True, type=click.Path(exists=True))
@click.option("--rules", required=True)
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--backend", default=None, help="builtin:stochastic, builtin:identity or exec:<command>.")
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
def generate_cmd(starters, rules, config, backend, seed, jobs, out):
    """Run the iterative generation loop and save the resulting library."""
    overrides = {"seed": _resolve_seed(seed)}
    if backend is not None:
        overrides["backend"] = backend
    try:
        cfg = pipeline.GenerationConfig.from_json(
            Path(config).read_text(), rules=_load_rules(rules), **overrides
        )
    except (TypeError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"bad generation config: {exc}")
    starter_lib = metrics.PatternLibrary.load(starters)
    if not len(starter_lib):
        raise click.UsageError(f"no starter patterns in {starters!r}")
    lib, report = pipeline.run_pipeline(starter_lib.grids(), cfg, jobs=jobs)
    out_dir = Path(out)
    lib.save(out_dir)
    (out_dir / "report.json").write_text(report.to_json())
    click.echo(report.to_json())


@main.command("legalize")
@click.option("--topology", required=True, type=click.Path(exists=True))
@click.option("--rules", required=True)
@click.option("--budget", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path())
@click.pass_context
def legalize_cmd(ctx, topology, rules, budget, seed, out):
    """Solve a squish topology into legal delta vectors; exits 4 on budget."""
    obj = json.loads(Path(topology).read_text())
    topo = obj["topology"] if isinstance(obj, dict) else obj
    outcome = legalize.solve(topo, _load_rules(rules), budget=budget, seed=_resolve_seed(seed))
    payload = {"status": outcome.status, "stats": outcome.stats}
    if outcome.deltas is not None:
        payload["delta_x_nm"] = list(outcome.deltas[0])
        payload["delta_y_nm"] = list(outcome.deltas[1])
    _emit_text(json.dumps(payload, indent=2), out)
    if outcome.status == legalize.STATUS_BUDGET:
        ctx.exit(EXIT_BUDGET)


@main.command("solver-bench")
@click.option("--sizes", default="16,32,64", show_default=True)
@click.option("--variants", default="default,complex,complex_discrete", show_default=True)
@click.option("--samples", type=int, default=5, show_default=True)
@click.option("--budget", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path())
def solver_bench(sizes, variants, samples, budget, seed, out):
    """Solver success/runtime scaling study; emits CSV."""
    try:
        size_list = [int(s) for s in sizes.split(",") if s]
    except ValueError:
        raise click.UsageError(f"bad --sizes {sizes!r}")
    report = legalize.bench(
        size_list,
        [v.strip() for v in variants.split(",") if v.strip()],
        samples_per_size=samples,
        budget=budget,
        seed=_resolve_seed(seed),
    )
    _emit_text(report.to_csv(), out)


@main.command("split-starters")
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--clip-width", type=int, default=512, show_default=True)
@click.option("--clip-height", type=int, default=512, show_default=True)
@click.option("--count", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
def split_starters(input_, clip_width, clip_height, count, out):
    """Split a large layout into starter-sized clips."""
    grid = load_pattern(Path(input_).read_bytes())
    clips = split_clips(grid, clip_width, clip_height, count)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, clip in enumerate(clips):
        (out_dir / f"{i:06d}.pbm").write_bytes(save_pattern(clip, "P4"))
    click.echo(f"wrote {len(clips)} clips to {out_dir}")


@main.command("mask-from-drc")
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--rules", required=True)
@click.option("--expand", type=float, default=0.25, show_default=True)
@click.option("--max-area-frac", type=float, default=0.30, show_default=True)
@click.option("--out", type=click.Path())
def mask_from_drc(input_, rules, expand, max_area_frac, out):
    """Build a regeneration mask from a pattern's DRC violations."""
    grid = load_pattern(Path(input_).read_bytes())
    violations = drc.check(grid, _load_rules(rules))
    if not violations:
        _emit_text(json.dumps({"violations": 0, "mask": None}), out)
        return
    mask = masks.mask_from_violations(violations, expand, max_area_frac, (grid.width, grid.height))
    if mask is masks.SKIP:
        payload = {"violations": len(violations), "mask": None, "skip": True}
    else:
        payload = {"violations": len(violations), "mask": mask.to_json()}
    _emit_text(json.dumps(payload, indent=2), out)


def entry(argv=None) -> int:
    """Console entry point with the stable exit-code mapping."""
    try:
        rv = main.main(args=argv, standalone_mode=False)
        # click returns ctx.exit codes instead of raising in this mode
        return rv if isinstance(rv, int) else EXIT_OK
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except (ProtocolError, BackendError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_BACKEND
    except PatternForgeError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (json.JSONDecodeError, KeyError, OSError) as exc:
        click.echo(f"error: bad input: {exc}", err=True)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(entry())
