import itertools

import numpy as np
import pytest

from patternforge.drc import RuleSet, check, is_legal, load_preset
from patternforge.errors import PatternForgeError, TopologyError
from patternforge.grid import PatternGrid
from patternforge.legalize import (
    STATUS_BUDGET,
    STATUS_INFEASIBLE,
    STATUS_SOLVED,
    AxisConstraintSystem,
    Interval,
    _bellman_ford,
    _solve_axis,
    bench,
    bench_topology,
    derive_constraints,
    random_minimal_topology,
    solve,
)
from patternforge.squish import SquishPattern, decode

DEFAULT = load_preset("default")
COMPLEX = load_preset("complex")
DISCRETE = load_preset("complex_discrete")

SMALL = RuleSet(
    min_width_h=2,
    min_width_v=2,
    max_width_h=4,
    max_width_v=4,
    min_space_h=2,
    min_space_v=2,
    max_space_h=5,
    max_space_v=5,
)


def decoded(topology, outcome):
    dx, dy = outcome.deltas
    sq = SquishPattern(
        topology=tuple(tuple(int(c) for c in row) for row in np.asarray(topology)),
        delta_x=dx,
        delta_y=dy,
    )
    return decode(sq, 1)


class TestDeriveConstraints:
    def test_single_cell_example(self):
        sys_x = derive_constraints([[1, 0], [0, 0]], DEFAULT, "h")
        assert sys_x.n == 2
        widths = [iv for iv in sys_x.intervals if iv.kind == "width"]
        assert widths == [Interval(0, 1, "width", lo=16, hi=None)]

    def test_border_runs_keep_lower_bound_only(self):
        # topology row 1 0 1: both metal runs touch a border
        sys_x = derive_constraints([[1, 0, 1], [0, 0, 0]], COMPLEX, "h")
        widths = [iv for iv in sys_x.intervals if iv.kind == "width"]
        assert all(iv.hi is None and iv.discrete is None for iv in widths)
        assert all(iv.lo == COMPLEX.min_width_h for iv in widths)

    def test_interior_gap_gets_spacing_bounds(self):
        sys_x = derive_constraints([[1, 0, 1], [0, 0, 0]], COMPLEX, "h")
        gaps = [iv for iv in sys_x.intervals if iv.kind == "spacing"]
        assert gaps == [Interval(1, 2, "spacing", lo=COMPLEX.min_space_h, hi=COMPLEX.max_space_h)]

    def test_duplicate_intervals_merged(self):
        # two rows produce the same (0,1) width interval once
        sys_x = derive_constraints([[1, 0], [1, 1]], DEFAULT, "h")
        keys = [(iv.i, iv.j, iv.kind, iv.tier_link) for iv in sys_x.intervals]
        assert len(keys) == len(set(keys))

    def test_constraint_spans_match_run_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            topo = random_minimal_topology(8, 8, rng)
            for axis in "hv":
                lines = topo if axis == "h" else topo.T
                expected = set()
                for line in lines:
                    runs, start = [], 0
                    for k in range(1, 9):
                        if k == 8 or line[k] != line[start]:
                            runs.append((start, k, line[start]))
                            start = k
                    for pos, (s, e, v) in enumerate(runs):
                        if v == 1:
                            expected.add((s, e, "width"))
                        elif 0 < pos < len(runs) - 1:
                            expected.add((s, e, "spacing"))
                system = derive_constraints(topo, DEFAULT, axis)
                got = {(iv.i, iv.j, iv.kind) for iv in system.intervals}
                assert got == expected

    def test_unidirectional_axes(self):
        uni = load_preset("uni7")
        topo = [[1, 0, 1], [0, 1, 0], [1, 0, 1]]
        sys_h = derive_constraints(topo, uni, "h")
        assert all(iv.kind == "width" for iv in sys_h.intervals)
        sys_v = derive_constraints(topo, uni, "v")
        assert all(iv.kind == "spacing" for iv in sys_v.intervals)
        assert all(iv.lo == uni.e2e_min_space for iv in sys_v.intervals)

    def test_rejects_non_minimal(self):
        with pytest.raises(TopologyError):
            derive_constraints([[1, 1], [0, 0]], DEFAULT, "h")

    def test_system_validation(self):
        with pytest.raises(PatternForgeError):
            AxisConstraintSystem(axis="d", n=2, intervals=())
        with pytest.raises(PatternForgeError):
            AxisConstraintSystem(axis="h", n=2, intervals=(Interval(1, 3, "width", 1),))


class TestBellmanFord:
    def test_satisfies_all_constraints(self):
        rng = np.random.default_rng(1)
        feasible = infeasible = 0
        for _ in range(200):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 12))
            u = rng.integers(0, n, m)
            v = rng.integers(0, n, m)
            w = rng.integers(-4, 8, m)
            dist = _bellman_ford(n, u, v, w)
            # Floyd-Warshall oracle for negative-cycle detection
            fw = np.full((n, n), np.inf)
            np.fill_diagonal(fw, 0.0)
            for a, b, c in zip(u, v, w):
                fw[a, b] = min(fw[a, b], c)
            for k in range(n):
                fw = np.minimum(fw, fw[:, [k]] + fw[[k], :])
            has_neg_cycle = bool((np.diag(fw) < 0).any())
            if dist is None:
                infeasible += 1
                assert has_neg_cycle
            else:
                feasible += 1
                assert not has_neg_cycle
                assert all(dist[b] <= dist[a] + c for a, b, c in zip(u, v, w))
        assert feasible and infeasible  # both branches exercised


class TestSolveAxis:
    def test_conflicting_intervals_infeasible(self):
        system = AxisConstraintSystem(
            axis="h",
            n=2,
            intervals=(
                Interval(0, 2, "width", lo=10, hi=12),
                Interval(0, 2, "spacing", lo=14, hi=16),
            ),
        )
        rng = np.random.default_rng(0)
        assert _solve_axis(system, SMALL, rng, budget=100, counters={"nodes": 0}) is None

    def test_empty_discrete_set_infeasible(self):
        system = AxisConstraintSystem(
            axis="h", n=1, intervals=(Interval(0, 1, "width", lo=1, discrete=()),)
        )
        rng = np.random.default_rng(0)
        assert _solve_axis(system, SMALL, rng, budget=100, counters={"nodes": 0}) is None


def oracle_axis_feasible(topology, rules, axis, max_delta=8):
    """Brute force every delta assignment and apply the rules to run sums."""
    topo = np.asarray(topology)
    lines = topo if axis == "h" else topo.T
    n = lines.shape[1]
    min_w = getattr(rules, f"min_width_{axis}")
    max_w = getattr(rules, f"max_width_{axis}")
    min_s = getattr(rules, f"min_space_{axis}")
    max_s = getattr(rules, f"max_space_{axis}")
    for deltas in itertools.product(range(1, max_delta + 1), repeat=n):
        ok = True
        for line in lines:
            runs, start = [], 0
            for k in range(1, n + 1):
                if k == n or line[k] != line[start]:
                    runs.append((start, k, line[start]))
                    start = k
            for pos, (s, e, v) in enumerate(runs):
                total = sum(deltas[s:e])
                border = s == 0 or e == n
                if v == 1:
                    if min_w is not None and total < min_w:
                        ok = False
                    if not border and max_w is not None and total > max_w:
                        ok = False
                elif 0 < pos < len(runs) - 1:
                    if min_s is not None and total < min_s:
                        ok = False
                    if max_s is not None and total > max_s:
                        ok = False
            if not ok:
                break
        if ok:
            return True
    return False


class TestSolve:
    def test_single_cell_solves(self):
        out = solve([[1, 0], [0, 0]], DEFAULT, seed=0)
        assert out.status == STATUS_SOLVED
        assert is_legal(decoded([[1, 0], [0, 0]], out), DEFAULT)

    def test_exhaustive_feasibility_oracle(self):
        rng = np.random.default_rng(2)
        for case in range(60):
            rows = int(rng.integers(2, 4))
            cols = int(rng.integers(2, 4))
            topo = random_minimal_topology(rows, cols, rng)
            out = solve(topo, SMALL, budget=50_000, seed=case)
            expected = oracle_axis_feasible(topo, SMALL, "h") and oracle_axis_feasible(
                topo, SMALL, "v"
            )
            assert (out.status == STATUS_SOLVED) == expected

    def test_nested_width_conflict_infeasible(self):
        # columns 1..4 must stay <= max_width 4 in the first row, yet each
        # single column is a metal run >= min_width 2 in another row
        topo = [
            [0, 1, 1, 1, 0],
            [1, 0, 1, 0, 1],
            [0, 1, 0, 1, 0],
        ]
        assert not oracle_axis_feasible(topo, SMALL, "h")
        out = solve(topo, SMALL, budget=50_000, seed=0)
        assert out.status == STATUS_INFEASIBLE

    def test_solved_outcomes_decode_clean(self):
        rng = np.random.default_rng(3)
        for case in range(20):
            topo = random_minimal_topology(4, 4, rng)
            out = solve(topo, SMALL, budget=50_000, seed=case)
            if out.status == STATUS_SOLVED:
                assert not check(decoded(topo, out), SMALL)

    def test_discrete_widths_respected(self):
        rules = RuleSet(
            min_width_h=2,
            min_width_v=2,
            min_space_h=2,
            min_space_v=2,
            max_width_h=8,
            discrete_widths_h=(3, 5),
        )
        topo = [[0, 1, 0], [1, 1, 1]]  # interior h-width spans column 1
        out = solve(topo, rules, seed=1)
        assert out.status == STATUS_SOLVED
        assert out.deltas[0][1] in (3, 5)

    def test_tiered_spacing_branching(self):
        rules = RuleSet(
            min_width_h=2,
            min_width_v=2,
            min_space_h=3,
            min_space_v=3,
            spacing_tiers=((10, 8),),
        )
        topo = [[1, 0, 1], [0, 0, 0]]
        out = solve(topo, rules, seed=0)
        assert out.status == STATUS_SOLVED
        grid = decoded(topo, out)
        assert is_legal(grid, rules)

    def test_area_retry_grows_component(self):
        rules = RuleSet(
            min_width_h=2, min_width_v=2, min_space_h=2, min_space_v=2, min_area=25
        )
        topo = [[1, 0], [0, 0]]
        out = solve(topo, rules, seed=0)
        assert out.status == STATUS_SOLVED
        dx, dy = out.deltas
        assert dx[0] * dy[0] >= 25

    def test_budget_exhausted(self):
        rng = np.random.default_rng(4)
        topo = bench_topology(16, rng)
        out = solve(topo, DISCRETE, budget=1, seed=0)
        assert out.status == STATUS_BUDGET
        assert out.deltas is None

    def test_determinism(self):
        rng = np.random.default_rng(5)
        topo = bench_topology(8, rng)
        a = solve(topo, DISCRETE, budget=5000, seed=3)
        b = solve(topo, DISCRETE, budget=5000, seed=3)
        assert a.status == b.status and a.deltas == b.deltas

    def test_stats_populated(self):
        out = solve([[1, 0], [0, 0]], DEFAULT)
        assert out.stats["nodes_explored"] >= 1
        assert out.stats["wall_time"] >= 0


class TestBench:
    def test_bench_topology_properties(self):
        rng = np.random.default_rng(6)
        for size in (8, 16):
            topo = bench_topology(size, rng)
            assert topo.shape == (size, size)
            # legalizable under every preset variant by construction
            for rules in (DEFAULT, COMPLEX):
                assert solve(topo, rules, seed=0).status == STATUS_SOLVED

    def test_random_minimal_topology(self):
        rng = np.random.default_rng(7)
        topo = random_minimal_topology(6, 5, rng)
        assert topo.shape == (6, 5)
        assert np.abs(np.diff(topo.astype(np.int8), axis=0)).sum(axis=1).all()
        assert np.abs(np.diff(topo.astype(np.int8), axis=1)).sum(axis=0).all()

    def test_bench_smoke_and_ordering(self):
        report = bench(
            sizes=[8],
            variants=["default", "complex", "complex_discrete"],
            samples_per_size=3,
            budget=500,
            seed=0,
        )
        rates = {row["variant"]: row["success_rate"] for row in report.rows}
        assert rates["complex_discrete"] <= rates["complex"] <= rates["default"] == 1.0
        csv_text = report.to_csv()
        assert csv_text.splitlines()[0] == "size,variant,success_rate,mean_time,mean_nodes"
        assert len(csv_text.splitlines()) == 4

    def test_bench_rejects_tiny_sizes(self):
        with pytest.raises(PatternForgeError):
            bench(sizes=[2], variants=["default"])
