"""End-to-end checks through the installed console script.

The primary patternforge package is imported here (tests only) to drive the
adapter the way a real client would; the adapter itself never imports it.
"""

import json
import shutil
import subprocess

import numpy as np
import pytest

from sd_inpaint_adapter.pbm import save_pbm

patternforge = pytest.importorskip("patternforge")
from patternforge.backend import BackendSession
from patternforge.grid import MaskSpec, Rect
from patternforge.drc import load_preset
from patternforge.stochastic import make_starters

ADAPTER = shutil.which("sd-inpaint-adapter")
pytestmark = pytest.mark.skipif(ADAPTER is None, reason="console script not installed")


@pytest.fixture(scope="module")
def starters_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("starters")
    rules = load_preset("uni7")
    for i, grid in enumerate(make_starters(8, 64, 64, rules, seed=20)):
        (path / f"starter_{i:02d}.pbm").write_bytes(save_pbm(grid.pixels, grid.pitch_nm))
    return path


def test_session_conformance_100_cycles(starters_dir):
    rules = load_preset("uni7")
    grids = make_starters(10, 64, 64, rules, seed=4)
    masks = [
        MaskSpec(rects=(Rect(16, 16, 48, 48),)),
        MaskSpec(rects=(Rect(0, 0, 32, 32), Rect(32, 32, 64, 64))),
    ]
    accepted = attempted = 0
    with BackendSession(f"{ADAPTER} serve --model synthetic") as session:
        assert session.name == "sd-inpaint-adapter"
        for cycle in range(100):
            grid = grids[cycle % len(grids)]
            mask = masks[cycle % len(masks)]
            for result in session.request(grid, mask, n=2, seed=cycle):
                attempted += 1
                accepted += result.accepted
    assert attempted == 200 and accepted == 200


def test_serve_with_finetuned_weights(starters_dir, tmp_path):
    weights = tmp_path / "w.json"
    run = subprocess.run(
        [ADAPTER, "finetune", "--starters", str(starters_dir), "--out", str(weights)],
        capture_output=True,
        text=True,
    )
    assert run.returncode == 0, run.stderr
    assert weights.exists()
    rules = load_preset("uni7")
    grid = make_starters(1, 64, 64, rules, seed=9)[0]
    mask = MaskSpec(rects=(Rect(8, 8, 56, 56),))
    with BackendSession(f"{ADAPTER} serve --model synthetic --weights {weights}") as session:
        results = session.request(grid, mask, n=4, seed=3)
    assert all(r.accepted for r in results)


def test_finetune_empty_dir_exit_code(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    run = subprocess.run(
        [ADAPTER, "finetune", "--starters", str(empty), "--out", str(tmp_path / "w.json")],
        capture_output=True,
        text=True,
    )
    assert run.returncode == 1
    assert "error:" in run.stderr


def test_serve_unknown_model_exit_code():
    run = subprocess.run(
        [ADAPTER, "serve", "--model", "bogus"], capture_output=True, text=True, input=""
    )
    assert run.returncode == 1
    assert "error:" in run.stderr


def test_compare_report(starters_dir, tmp_path):
    weights = tmp_path / "w.json"
    subprocess.run(
        [ADAPTER, "finetune", "--starters", str(starters_dir), "--out", str(weights)],
        check=True,
        capture_output=True,
    )
    report_path = tmp_path / "report.json"
    run = subprocess.run(
        [
            ADAPTER,
            "compare",
            "--starters",
            str(starters_dir),
            "--weights",
            str(weights),
            "--rules",
            "uni7",
            "--num",
            "2",
            "--out",
            str(report_path),
        ],
        capture_output=True,
        text=True,
    )
    assert run.returncode == 0, run.stderr
    report = json.loads(report_path.read_text())
    assert len(report["starters"]) == 8
    for entry in report["starters"]:
        assert 0.0 <= entry["base_density"] <= 1.0
        assert 0.0 <= entry["finetuned_density"] <= 1.0
    if shutil.which("patternforge"):
        assert report["note"] is None
        for key in ("base_legal_fraction", "finetuned_legal_fraction"):
            assert 0.0 <= report[key] <= 1.0
    else:
        assert report["note"]


def test_distinct_payloads_over_trials(starters_dir):
    # n=4 requests should usually produce several distinct variations
    rules = load_preset("uni7")
    grid = make_starters(1, 64, 64, rules, seed=2)[0]
    mask = MaskSpec(rects=(Rect(16, 0, 48, 64),))
    good = 0
    with BackendSession(f"{ADAPTER} serve --model synthetic") as session:
        for trial in range(5):
            results = session.request(grid, mask, n=4, seed=trial)
            payloads = {np.asarray(r.grid.pixels).tobytes() for r in results if r.accepted}
            good += len(payloads) >= 3
    assert good >= 3
