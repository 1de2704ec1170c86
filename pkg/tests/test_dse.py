import csv
import math

import pytest

from chipmap import zoo
from chipmap.arch import GB, ArchConfig
from chipmap.costmodel import CostParams
from chipmap.dse import (Objective, SearchSettings, derive_seed, evaluate_candidate, geomean,
                         rank, read_arch_file, run_dse, run_joint_dse, tile_up,
                         write_best_arch, write_result_csv)
from chipmap.energy import EnergyTable

TINY_GRID = {"tops": 16, "x_cut": [1, 2, 3], "y_cut": [1, 2], "dram_bw_per_tops": [2.0],
             "noc_bw": [32], "d2d_bw_ratio": [0.5], "glb_per_core": [512, 2048],
             "mac_per_core": [1024]}


def tiny_models():
    return [zoo.conv_chain(2, size=4, channels=8, batch=2),
            zoo.attention_head(seq=8, d_model=16, batch=2)]


def test_objective_and_geomean():
    assert Objective(1, 1, 1).value(2, 3, 4) == 24
    assert geomean([4, 9]) == pytest.approx(6)
    assert Objective.parse("0,1,2") == Objective(0, 1, 2)
    with pytest.raises(ValueError):
        Objective(0, 0, 0)
    with pytest.raises(ValueError):
        Objective.parse("1,1")
    assert geomean([1.0, math.inf]) == math.inf


def test_seed_derivation_depends_on_candidate():
    a, b = ArchConfig(4, 2), ArchConfig(4, 2, 2, 1)
    assert derive_seed(0, a, 0) == derive_seed(0, a, 0)
    assert len({derive_seed(0, a, 0), derive_seed(0, b, 0), derive_seed(1, a, 0),
                derive_seed(0, a, 1)}) == 4


def test_dse_is_exhaustive_and_deterministic(tmp_path):
    models = tiny_models()
    r1 = run_dse(TINY_GRID, models, seed=3, budget_scale=0.05)
    r2 = run_dse(TINY_GRID, models, seed=3, budget_scale=0.05)
    n_valid = 2 * 2 * 2      # x_cut 3 does not divide 4 cores
    assert len(r1.ranked) + len(r1.excluded) == n_valid
    assert all("x_cut=3" in p.reason for p in r1.invalid)
    write_result_csv(r1, tmp_path / "a.csv")
    write_result_csv(r2, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert [r["status"] for r in rows].count("ok") == len(r1.ranked)
    assert "E_chain" in rows[0] and "D_attn3" in rows[0]
    objs = [float(r["objective"]) for r in rows if r["status"] == "ok"]
    assert objs == sorted(objs)
    best = r1.best
    assert best.energy == pytest.approx(geomean([e for _, e, _ in best.per_dnn]))


def test_alpha_zero_ignores_cost_params():
    models = tiny_models()[:1]
    obj = Objective(0, 1, 1)
    a = run_dse(TINY_GRID, models, obj, CostParams(), seed=1, budget_scale=0.05)
    b = run_dse(TINY_GRID, models, obj, CostParams(c_silicon=7.0, c_dram_die=1.0), seed=1,
                budget_scale=0.05)
    assert [r.cfg for r in a.ranked] == [r.cfg for r in b.ranked]
    assert [r.mc for r in a.ranked] != [r.mc for r in b.ranked]


def test_failed_candidate_is_recorded():
    # a single layer wider than any GLB can hold fails intra-core scheduling
    graph = zoo.conv_chain(1, size=2, channels=8, batch=1)
    res = evaluate_candidate(ArchConfig(1, 1, glb_per_core=8), [graph], Objective(),
                             CostParams(), EnergyTable(), SearchSettings(0, 0.01))
    assert res.status == "failed" and res.reason
    assert rank([res]) == [res]


def test_best_arch_round_trip(tmp_path):
    cfg = ArchConfig(6, 6, 2, 1)
    write_best_arch(cfg, tmp_path / "best.txt")
    text = (tmp_path / "best.txt").read_text()
    assert text.splitlines()[0] == "(2, 36, 144GB/s, 32GB/s, 16GB/s, 2MB, 1024)"
    assert read_arch_file(tmp_path / "best.txt") == cfg


def test_tile_up_two_to_eight():
    low = ArchConfig(4, 2, 2, 1, dram_bw_total=32 * GB)
    big = tile_up(low, 4)
    assert big.n_chiplets == 8 and big.chiplet_dims == low.chiplet_dims
    assert big.n_cores == 4 * low.n_cores and big.dram_bw_total == 4 * low.dram_bw_total
    assert tile_up(low, 1) == low


def test_joint_dse_ranks_by_product():
    lows = [ArchConfig(2, 2, 2, 1, dram_bw_total=32 * GB),
            ArchConfig(2, 2, 2, 2, dram_bw_total=32 * GB),
            ArchConfig(2, 2, dram_bw_total=32 * GB)]
    ranked, skipped = run_joint_dse(lows, 2, tiny_models()[:1], budget_scale=0.05)
    assert [c for c, _ in skipped] == [lows[2]]
    assert len(ranked) == 2
    assert ranked[0].product <= ranked[1].product
    for j in ranked:
        assert j.product == pytest.approx(j.low.objective * j.high.objective)
        assert j.high.cfg.n_chiplets == 2 * j.low.cfg.n_chiplets
