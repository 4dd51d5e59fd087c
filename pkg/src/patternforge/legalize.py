"""Legalization of squish topologies into physical delta vectors.

Width and spacing rules over a topology become interval-sum constraints on
the delta vectors, which are difference constraints on prefix sums: a
Bellman-Ford negative-cycle test decides feasibility and any feasible
potential yields integer deltas. Discrete width sets and spacing tiers are
handled by seeded depth-first branching over the linear core; the minimum
component area rule is the one cross-axis constraint and is retried
post-hoc. Every Solved outcome is re-verified with the independent DRC.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import drc
from .errors import PatternForgeError, TopologyError
from .grid import PatternGrid
from .squish import SquishPattern, check_minimal, decode, encode

STATUS_SOLVED = "Solved"
STATUS_INFEASIBLE = "Infeasible"
STATUS_BUDGET = "BudgetExhausted"

_AREA_RETRIES = 16


@dataclass(frozen=True)
class Interval:
    """One interval-sum constraint: lo <= sum(delta[i:j]) <= hi, in nm.

    ``hi`` None means unbounded. ``discrete`` restricts the sum to a fixed
    value set. ``tier_link`` ties a spacing interval to its two adjacent
    width intervals for tier resolution.
    """

    i: int
    j: int
    kind: str  # "width" or "spacing"
    lo: int
    hi: Optional[int] = None
    discrete: Optional[tuple[int, ...]] = None
    tier_link: Optional[tuple[tuple[int, int], tuple[int, int]]] = None


@dataclass(frozen=True)
class AxisConstraintSystem:
    """All interval constraints of one axis over ``n`` deltas."""

    axis: str
    n: int
    intervals: tuple[Interval, ...]

    def __post_init__(self):
        if self.axis not in ("h", "v"):
            raise PatternForgeError(f"axis must be 'h' or 'v', got {self.axis!r}")
        for iv in self.intervals:
            if not 0 <= iv.i < iv.j <= self.n:
                raise PatternForgeError(f"interval ({iv.i}, {iv.j}) out of range for n={self.n}")


@dataclass(frozen=True)
class SolveOutcome:
    status: str
    deltas: Optional[tuple[tuple[int, ...], tuple[int, ...]]] = None
    stats: dict = field(default_factory=dict)


def _line_runs(line: np.ndarray) -> list[tuple[int, int, int]]:
    cuts = np.flatnonzero(np.diff(line.astype(np.int8))) + 1
    bounds = [0, *map(int, cuts), len(line)]
    return [(bounds[k], bounds[k + 1], int(line[bounds[k]])) for k in range(len(bounds) - 1)]


def derive_constraints(topology, rules: drc.RuleSet, axis: str) -> AxisConstraintSystem:
    """Extract the interval-sum constraints of one axis from a topology.

    Width semantics mirror the DRC exactly: border-touching metal runs keep
    only their lower bound (no maximum, no discrete membership), and gaps
    touching a border are unconstrained. Unidirectional mode constrains only
    horizontal widths and vertical end-to-end gaps.
    """
    topo = np.asarray(topology, dtype=np.uint8)
    if topo.ndim != 2:
        raise TopologyError("topology must be a 2-D binary matrix")
    check_minimal(topo)
    lines = topo if axis == "h" else topo.T
    if axis not in ("h", "v"):
        raise PatternForgeError(f"axis must be 'h' or 'v', got {axis!r}")
    n = lines.shape[1]
    uni = rules.mode == drc.MODE_UNIDIRECTIONAL
    min_w = getattr(rules, f"min_width_{axis}")
    max_w = getattr(rules, f"max_width_{axis}")
    discrete = getattr(rules, f"discrete_widths_{axis}")
    min_s = getattr(rules, f"min_space_{axis}")
    max_s = getattr(rules, f"max_space_{axis}")
    check_width = not (uni and axis == "v")
    check_space = not uni
    check_e2e = uni and axis == "v"

    merged: dict[tuple, Interval] = {}

    def put(iv: Interval):
        key = (iv.i, iv.j, iv.kind, iv.tier_link)
        old = merged.get(key)
        if old is not None:
            lo = max(old.lo, iv.lo)
            hi = iv.hi if old.hi is None else (old.hi if iv.hi is None else min(old.hi, iv.hi))
            ds = old.discrete
            if iv.discrete is not None:
                ds = iv.discrete if ds is None else tuple(sorted(set(ds) & set(iv.discrete)))
            iv = Interval(iv.i, iv.j, iv.kind, lo, hi, ds, iv.tier_link)
        merged[key] = iv

    for line in lines:
        runs = _line_runs(line)
        for pos, (s, e, value) in enumerate(runs):
            border = s == 0 or e == n
            if value == 1 and check_width:
                put(
                    Interval(
                        s, e, "width",
                        lo=min_w if min_w is not None else 1,
                        hi=None if border else max_w,
                        discrete=None if border else discrete,
                    )
                )
            elif value == 0 and 0 < pos < len(runs) - 1:
                if check_e2e:
                    put(Interval(s, e, "spacing", lo=rules.e2e_min_space))
                elif check_space:
                    link = None
                    if rules.spacing_tiers:
                        left = runs[pos - 1]
                        right = runs[pos + 1]
                        link = ((left[0], left[1]), (right[0], right[1]))
                    put(Interval(s, e, "spacing", lo=min_s or 1, hi=max_s, tier_link=link))
    order = sorted(merged.values(), key=lambda iv: (iv.i, iv.j, iv.kind, iv.tier_link or ()))
    return AxisConstraintSystem(axis=axis, n=n, intervals=tuple(order))


def _bellman_ford(n_nodes: int, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> Optional[np.ndarray]:
    """Shortest-path potentials for edges S_v - S_u <= w, or None on a
    negative cycle (infeasible difference-constraint system)."""
    dist = np.zeros(n_nodes, dtype=np.int64)
    for _ in range(n_nodes):
        new = dist.copy()
        np.minimum.at(new, v, dist[u] + w)
        if np.array_equal(new, dist):
            return dist
        dist = new
    new = dist.copy()
    np.minimum.at(new, v, dist[u] + w)
    return dist if np.array_equal(new, dist) else None


class _BudgetExhausted(Exception):
    pass


def _interval_edges(i: int, j: int, lo: Optional[int], hi: Optional[int]) -> list[tuple[int, int, int]]:
    edges = []
    if lo is not None:
        edges.append((j, i, -lo))  # S_j - S_i >= lo
    if hi is not None:
        edges.append((i, j, hi))  # S_j - S_i <= hi
    return edges


def _tier_options(iv: Interval, rules: drc.RuleSet) -> list[list[tuple[int, int, int]]]:
    """Branch alternatives for one tier-linked spacing constraint.

    Each option fixes the tier class of max(adjacent widths) and, for tiered
    classes, which side attains it, then applies the class's spacing floor.
    """
    (il, jl), (ir, jr) = iv.tier_link
    tiers = rules.spacing_tiers
    options = []
    # class 0: both neighbors below the first threshold, base spacing applies
    cap = tiers[0][0] - 1
    options.append(_interval_edges(il, jl, None, cap) + _interval_edges(ir, jr, None, cap))
    for k, (w_at_least, space) in enumerate(tiers):
        cap = tiers[k + 1][0] - 1 if k + 1 < len(tiers) else None
        floor = max(iv.lo, space)
        for i0, j0 in ((il, jl), (ir, jr)):
            option = _interval_edges(i0, j0, w_at_least, None)
            option += _interval_edges(il, jl, None, cap)
            option += _interval_edges(ir, jr, None, cap)
            option += _interval_edges(iv.i, iv.j, floor, None)
            options.append(option)
    return options


def _solve_axis(
    system: AxisConstraintSystem,
    rules: drc.RuleSet,
    rng: np.random.Generator,
    budget: int,
    counters: dict,
    width_bump: int = 0,
):
    """One axis: returns delta list, None (infeasible), or raises on budget.

    ``width_bump`` raises non-discrete width lower bounds, used by the area
    retry loop to grow small components.
    """
    n = system.n
    base: list[tuple[int, int, int]] = [(k + 1, k, -1) for k in range(n)]
    decisions: list[list[list[tuple[int, int, int]]]] = []
    for iv in system.intervals:
        if iv.discrete is not None:
            if not iv.discrete:
                return None  # emptied by intersection: no admissible value
            lo = max(iv.lo, min(iv.discrete))
            hi = min(iv.hi, max(iv.discrete)) if iv.hi is not None else max(iv.discrete)
            base += _interval_edges(iv.i, iv.j, lo, hi)
            values = [int(iv.discrete[k]) for k in rng.permutation(len(iv.discrete))]
            decisions.append([_interval_edges(iv.i, iv.j, v, v) for v in values])
        else:
            lo = iv.lo
            if iv.kind == "width" and width_bump and (iv.hi is None or lo + width_bump <= iv.hi):
                lo += width_bump
            base += _interval_edges(iv.i, iv.j, lo, iv.hi)
        if iv.tier_link is not None:
            options = _tier_options(iv, rules)
            decisions.append([options[k] for k in rng.permutation(len(options))])

    stack: list[tuple[int, list[tuple[int, int, int]]]] = [(0, base)]
    while stack:
        depth, edges = stack.pop()
        counters["nodes"] += 1
        if counters["nodes"] > budget:
            raise _BudgetExhausted
        u, v, w = (np.array(col, dtype=np.int64) for col in zip(*edges))
        dist = _bellman_ford(n + 1, u, v, w)
        if dist is None:
            continue
        if depth == len(decisions):
            return [int(dist[k + 1] - dist[k]) for k in range(n)]
        for option in reversed(decisions[depth]):
            stack.append((depth + 1, edges + option))
    return None


def solve(topology, rules: drc.RuleSet, budget: int = 100_000, seed: int = 0) -> SolveOutcome:
    """Legalize a minimal topology into (delta_x, delta_y) under ``rules``.

    Deterministic for a fixed seed and budget. A Solved outcome always
    decodes to a DR-clean pattern (re-checked here, not assumed).
    """
    t0 = time.perf_counter()
    topo = np.asarray(topology, dtype=np.uint8)
    sys_x = derive_constraints(topo, rules, "h")
    sys_y = derive_constraints(topo, rules, "v")
    counters = {"nodes": 0}

    def done(status, deltas=None):
        return SolveOutcome(
            status=status,
            deltas=deltas,
            stats={"nodes_explored": counters["nodes"], "wall_time": time.perf_counter() - t0},
        )

    try:
        for attempt in range(_AREA_RETRIES + 1):
            rng_x = np.random.default_rng([abs(int(seed)), 0, attempt])
            rng_y = np.random.default_rng([abs(int(seed)), 1, attempt])
            dx = _solve_axis(sys_x, rules, rng_x, budget, counters, width_bump=attempt)
            dy = _solve_axis(sys_y, rules, rng_y, budget, counters, width_bump=attempt)
            if dx is None or dy is None:
                if attempt == 0:
                    return done(STATUS_INFEASIBLE)
                break  # bumped bounds went infeasible; bigger bumps will too
            sq = SquishPattern(
                topology=tuple(tuple(int(c) for c in row) for row in topo),
                delta_x=tuple(dx),
                delta_y=tuple(dy),
            )
            violations = drc.check(decode(sq, pitch_nm=1), rules, merge=False)
            if not violations:
                return done(STATUS_SOLVED, (tuple(dx), tuple(dy)))
            if any(v.rule_id != "R4-A" for v in violations):
                raise PatternForgeError(
                    f"legalizer produced a non-area violation: {violations[0]}"
                )
    except _BudgetExhausted:
        pass
    return done(STATUS_BUDGET)


def bench_topology(size: int, rng: np.random.Generator) -> np.ndarray:
    """Random minimal size x size topology that is known to be legalizable.

    Built by rasterizing a staggered vertical-track pattern (track phases
    randomized) that is DR-clean under the complex preset, then encoding it;
    constraint-set inclusion then guarantees a legal solution exists under
    the default preset too, so bench failures measure the solver, not
    trivially contradictory instances.
    """
    if size < 4:
        raise PatternForgeError(f"bench topology size must be >= 4, got {size}")
    tracks = size // 2
    period = min(4, tracks)
    for _ in range(50):
        phases = list(rng.permutation(period))
        while len(phases) < tracks:
            c = int(rng.integers(period))
            if len(phases) >= 2 and phases[-1] == phases[-2] == c:
                c = (c + 1) % period  # never three equal-phase tracks in a row
            phases.append(c)

        width_px, space_px, row_px = 16, 18, 20
        flush_left = size % 2 == 0
        w = tracks * width_px + (tracks - 1) * space_px + space_px * (1 if flush_left else 2)
        px = np.zeros((row_px * size, w), dtype=np.uint8)
        for t in range(tracks):
            x = t * (width_px + space_px) + (0 if flush_left else space_px)
            on_rows = [r for r in range(size) if r % period != phases[t]]
            for r in on_rows:
                px[r * row_px : (r + 1) * row_px, x : x + width_px] = 1
        topo = encode(PatternGrid(px, 1)).topology_array()
        if topo.shape == (size, size):
            return topo
    raise PatternForgeError(f"could not construct a {size}x{size} bench topology")


def random_minimal_topology(rows: int, cols: int, rng: np.random.Generator, density: float = 0.5) -> np.ndarray:
    """Random binary matrix with no two identical adjacent rows or columns."""
    for _ in range(200):
        topo = (rng.random((rows, cols)) < density).astype(np.uint8)
        for _fix in range(10 * (rows + cols)):
            cols_dup = np.flatnonzero(~np.diff(topo.astype(np.int8), axis=1).any(axis=0)) + 1
            rows_dup = np.flatnonzero(~np.diff(topo.astype(np.int8), axis=0).any(axis=1)) + 1
            if cols_dup.size == 0 and rows_dup.size == 0:
                return topo
            if cols_dup.size:
                topo[int(rng.integers(rows)), int(cols_dup[0])] ^= 1
            if rows_dup.size:
                topo[int(rows_dup[0]), int(rng.integers(cols))] ^= 1
    raise PatternForgeError(f"could not sample a minimal {rows}x{cols} topology")


@dataclass
class BenchReport:
    rows: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=["size", "variant", "success_rate", "mean_time", "mean_nodes"])
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return out.getvalue()


def bench(
    sizes: list[int],
    variants: list[str],
    samples_per_size: int = 5,
    budget: int = 2000,
    seed: int = 0,
) -> BenchReport:
    """Solver scaling study over random minimal topologies.

    The same topologies are solved under every variant, so per-size success
    rates are directly comparable across rule complexity.
    """
    if any(s < 4 for s in sizes):
        raise PatternForgeError("bench sizes must be at least 4")
    rules_by_variant = {v: drc.load_preset(v) for v in variants}
    report = BenchReport()
    for size in sizes:
        rng = np.random.default_rng([abs(int(seed)), size])
        topologies = [bench_topology(size, rng) for _ in range(samples_per_size)]
        for variant in variants:
            rules = rules_by_variant[variant]
            outcomes = [
                solve(t, rules, budget=budget, seed=seed + k) for k, t in enumerate(topologies)
            ]
            report.rows.append(
                {
                    "size": size,
                    "variant": variant,
                    "success_rate": sum(o.status == STATUS_SOLVED for o in outcomes) / len(outcomes),
                    "mean_time": float(np.mean([o.stats["wall_time"] for o in outcomes])),
                    "mean_nodes": float(np.mean([o.stats["nodes_explored"] for o in outcomes])),
                }
            )
    return report
