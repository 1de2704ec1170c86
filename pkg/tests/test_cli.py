import csv
import json
from pathlib import Path

import pytest

from chipmap import zoo
from chipmap.cli import main
from chipmap.workload import dump_model

GRID = {"tops": 16, "x_cut": [1, 2, 5], "y_cut": [1], "dram_bw_per_tops": [2.0],
        "noc_bw": [32], "d2d_bw_ratio": [0.5], "glb_per_core": [2048], "mac_per_core": [1024]}


@pytest.fixture
def files(tmp_path):
    model = tmp_path / "chain.json"
    model.write_text(dump_model(zoo.conv_chain(2, size=4, channels=8, batch=2)))
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps(GRID))
    arch = tmp_path / "arch.json"
    arch.write_text(json.dumps({"cores_x": 4, "cores_y": 2, "x_cut": 2, "y_cut": 1,
                                "dram_bw_total": 32e9}))
    base = tmp_path / "base.json"
    base.write_text(json.dumps({"cores_x": 4, "cores_y": 2, "dram_bw_total": 32e9}))
    return {"model": str(model), "grid": str(grid), "arch": str(arch), "base": str(base),
            "out": str(tmp_path / "runs")}


def only_run(out):
    runs = sorted(Path(out).iterdir())
    return runs[-1]


def common(files, seed=7):
    return ["--seed", str(seed), "--threads", "1", "--out", files["out"], "--sa-scale", "0.05"]


def test_dse_smoke_and_determinism(files, capsys):
    argv = ["dse", "--models", files["model"], "zoo:attention", "--batch", "2",
            "--grid", files["grid"]] + common(files)
    assert main(argv) == 0
    first = only_run(files["out"])
    assert main(argv) == 0
    second = only_run(files["out"])
    assert first != second
    assert (first / "result.csv").read_bytes() == (second / "result.csv").read_bytes()
    rows = list(csv.DictReader(open(first / "result.csv")))
    assert [r["status"] for r in rows].count("ok") == 2
    assert [r["status"] for r in rows][-1] == "invalid" and "x_cut=5" in rows[-1]["reason"]
    assert (first / "best_arch.txt").read_text().startswith("(")
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["command"] == "dse"
    assert capsys.readouterr().out.startswith("(")


def test_dse_without_valid_candidates(files, tmp_path):
    grid = tmp_path / "bad.json"
    grid.write_text(json.dumps(dict(GRID, x_cut=[3])))
    argv = ["dse", "--models", files["model"], "--grid", str(grid)] + common(files)
    assert main(argv) == 2


def test_config_errors_exit_one(files, tmp_path, capsys):
    broken = tmp_path / "m.json"
    broken.write_text('{"layers": [{"name": "a", "kind": "Conv", "ofmap": [4, 4, 4], '
                      '"kernel": [3, 3, 3], "predecessors": ["nope"]}]}')
    argv = ["dse", "--models", str(broken), "--grid", files["grid"]] + common(files)
    assert main(argv) == 1
    assert "dangling predecessor" in capsys.readouterr().err
    assert main(["cost", "--arch", str(tmp_path / "missing.json")]) == 1


def test_cost(files, capsys):
    assert main(["cost", "--arch", files["arch"], "--out", files["out"]]) == 0
    doc = json.loads((only_run(files["out"]) / "cost.json").read_text())
    assert doc["total"] == pytest.approx(doc["silicon"] + doc["dram"] + doc["packaging"])
    assert "MC=$" in capsys.readouterr().out


def test_map_then_eval(files):
    argv = ["map", "--models", files["model"], "--arch", files["arch"], "--trace"] + common(files)
    assert main(argv) == 0
    run = only_run(files["out"])
    for name in ("mapping.json", "report.json", "heatmap.txt", "trace.csv", "manifest.json"):
        assert (run / name).exists()
    mapped = json.loads((run / "report.json").read_text())
    argv = ["eval", "--models", files["model"], "--arch", files["arch"],
            "--lms", str(run / "mapping.json")] + common(files)
    assert main(argv) == 0
    again = json.loads((only_run(files["out"]) / "report.json").read_text())
    assert again["energy_j"] == pytest.approx(mapped["energy_j"], rel=1e-12)
    assert again["delay_s"] == pytest.approx(mapped["delay_s"], rel=1e-12)


def test_eval_rejects_partial_cover(files, tmp_path):
    lms = tmp_path / "lms.json"
    lms.write_text(json.dumps({"batch_unit": 1, "layers": [
        {"layer": "c0", "part": [1, 1, 1, 1], "cg": [0], "fd": [0, 0, 0]}]}))
    argv = ["eval", "--models", files["model"], "--arch", files["arch"],
            "--lms", str(lms)] + common(files)
    assert main(argv) == 1


def test_compare(files):
    argv = ["compare", "--models", files["model"], "--best", files["arch"],
            "--baseline", files["base"], "--batches", "1", "2"] + common(files)
    assert main(argv) == 0
    rows = list(csv.DictReader(open(only_run(files["out"]) / "compare.csv")))
    assert len(rows) == 3 * 2
    for r in rows:
        if (r["arch"], r["mapping"]) == ("base-arch", "stripe-map"):
            assert float(r["E_norm"]) == 1.0 and float(r["D_norm"]) == 1.0


def test_self_compare_is_unity(files):
    argv = ["compare", "--models", files["model"], "--best", files["base"],
            "--baseline", files["base"], "--batches", "2"] + common(files)
    assert main(argv) == 0
    rows = list(csv.DictReader(open(only_run(files["out"]) / "compare.csv")))
    sa = {r["arch"]: r for r in rows if r["mapping"] == "sa-map"}
    assert sa["opt-arch"]["E"] == sa["base-arch"]["E"]
