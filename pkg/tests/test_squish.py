import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patternforge.errors import QuantizationError, TopologyError
from patternforge.grid import PatternGrid
from patternforge.squish import (
    ComplexityTuple,
    ScanLineSet,
    SquishPattern,
    check_minimal,
    complexity,
    decode,
    encode,
    extract_scan_lines,
)


def random_grid(rng, max_side=64, pitch=1):
    w = int(rng.integers(1, max_side + 1))
    h = int(rng.integers(1, max_side + 1))
    return PatternGrid(rng.integers(0, 2, (h, w), dtype=np.uint8), pitch)


class TestScanLines:
    def test_uniform_grid(self):
        lines = extract_scan_lines(PatternGrid.zeros(4, 4))
        assert lines.xs == (0, 4) and lines.ys == (0, 4)

    def test_square_at_origin(self):
        px = np.zeros((4, 4), dtype=np.uint8)
        px[:2, :2] = 1
        lines = extract_scan_lines(PatternGrid(px))
        assert lines.xs == (0, 2, 4) and lines.ys == (0, 2, 4)

    def test_single_column(self):
        px = np.zeros((4, 4), dtype=np.uint8)
        px[:, 1] = 1
        assert extract_scan_lines(PatternGrid(px)).xs == (0, 1, 2, 4)

    def test_invalid_scanlineset(self):
        with pytest.raises(Exception):
            ScanLineSet(xs=(1, 2), ys=(0, 2))


class TestEncode:
    def test_all_zero(self):
        sq = encode(PatternGrid.zeros(5, 3, pitch_nm=2))
        assert sq.topology == ((0,),)
        assert sq.delta_x == (10,) and sq.delta_y == (6,)

    def test_square_example(self):
        px = np.zeros((4, 4), dtype=np.uint8)
        px[:2, :2] = 1
        sq = encode(PatternGrid(px))
        assert sq.topology == ((1, 0), (0, 0))
        assert sq.delta_x == (2, 2) and sq.delta_y == (2, 2)

    def test_deltas_scaled_by_pitch(self):
        px = np.zeros((4, 4), dtype=np.uint8)
        px[:2, :2] = 1
        sq = encode(PatternGrid(px, pitch_nm=5))
        assert sq.delta_x == (10, 10)
        assert sq.physical_width_nm == 20


class TestDecode:
    def test_single_cell(self):
        sq = SquishPattern(topology=((1,),), delta_x=(3,), delta_y=(2,))
        g = decode(sq, 1)
        assert (g.width, g.height) == (3, 2)
        assert g.pixels.all()

    def test_quantization_error(self):
        sq = SquishPattern(topology=((1,),), delta_x=(3,), delta_y=(2,))
        with pytest.raises(QuantizationError):
            decode(sq, 2)

    def test_minimality_enforced(self):
        with pytest.raises(TopologyError):
            SquishPattern(topology=((1, 1),), delta_x=(1, 1), delta_y=(1,))
        with pytest.raises(TopologyError):
            SquishPattern(topology=((1,), (1,)), delta_x=(1,), delta_y=(1, 1))

    def test_dim_mismatch(self):
        with pytest.raises(TopologyError):
            SquishPattern(topology=((1, 0),), delta_x=(1,), delta_y=(1,))

    def test_positive_deltas(self):
        with pytest.raises(TopologyError):
            SquishPattern(topology=((1,),), delta_x=(0,), delta_y=(1,))


class TestRoundTrip:
    def test_thousand_random_grids(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            g = random_grid(rng)
            assert decode(encode(g), g.pitch_nm) == g

    def test_nontrivial_pitch(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            g = random_grid(rng, max_side=16, pitch=3)
            assert decode(encode(g), 3) == g

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**20))
    def test_property_roundtrip(self, w, h, bits):
        px = np.array([(bits >> i) & 1 for i in range(w * h)], dtype=np.uint8).reshape(h, w)
        g = PatternGrid(px)
        assert decode(encode(g), 1) == g

    def test_reencode_idempotent(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            g = random_grid(rng, max_side=24)
            sq = encode(g)
            assert encode(decode(sq, 1)) == sq


class TestComplexity:
    def test_all_zero(self):
        assert complexity(encode(PatternGrid.zeros(4, 4))) == ComplexityTuple(1, 1)

    def test_square_example(self):
        px = np.zeros((4, 4), dtype=np.uint8)
        px[:2, :2] = 1
        assert complexity(encode(PatternGrid(px))) == ComplexityTuple(2, 2)

    def test_invariant_under_upsampling(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            g = random_grid(rng, max_side=12)
            up = PatternGrid(np.repeat(np.repeat(g.pixels, 3, axis=0), 3, axis=1))
            assert complexity(encode(up)) == complexity(encode(g))


class TestJson:
    def test_roundtrip(self):
        sq = SquishPattern(topology=((1, 0), (0, 1)), delta_x=(2, 3), delta_y=(4, 5))
        assert SquishPattern.from_json(sq.to_json()) == sq

    def test_exact_keys(self):
        import json

        obj = json.loads(SquishPattern(topology=((1,),), delta_x=(2,), delta_y=(3,)).to_json())
        assert set(obj) == {"topology", "delta_x_nm", "delta_y_nm"}


def test_check_minimal_accepts_minimal():
    check_minimal(np.array([[1, 0], [0, 1]], dtype=np.uint8))
    with pytest.raises(TopologyError):
        check_minimal(np.array([[1, 1], [0, 0]], dtype=np.uint8))
