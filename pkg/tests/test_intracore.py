import itertools
import math

import pytest
from hypothesis import given, strategies as st

from chipmap import zoo
from chipmap.arch import ArchConfig, KB
from chipmap.energy import EnergyTable
from chipmap.intracore import (ORDERS, CoreWorkload, divisors, explore_intracore, lanes,
                               schedule_workload, tile_costs)
from chipmap.mapping import LayerMapping, LpSpatialMapping, Partition4D, parse_lms

E = EnergyTable()


def brute_force(wl, cfg):
    """Scalar loop over every divisor tiling and order; returns min energy x time."""
    best = math.inf
    for tk, tc, th, tw, tb in itertools.product(*(divisors(n) for n in
                                                  (wl.k, wl.c, wl.h, wl.w, wl.b))):
        for order in ORDERS:
            fp, _, _, t, e = tile_costs(wl, tk, tc, th, tw, tb, order, cfg.mac_per_core,
                                        cfg.freq_hz, cfg.glb_bw_per_cycle, E.mac_pj,
                                        E.glb_pj_per_byte)
            if fp <= cfg.glb_per_core:
                best = min(best, float(e) * float(t))
    return best


def test_gemm_matches_brute_force_small_glb():
    wl = CoreWorkload("mac", 16, 16, 16, 1, 1)
    cfg = ArchConfig(1, 1, glb_per_core=1 * KB, mac_per_core=64)
    s = schedule_workload(wl, cfg, E)
    assert s.feasible and s.footprint <= 1 * KB
    assert s.energy_pj * s.core_time == pytest.approx(brute_force(wl, cfg), rel=1e-12)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 6), st.integers(1, 2),
       st.sampled_from([1, 3]), st.sampled_from([256, 1024, 4096]))
def test_search_is_optimal_and_sound(k, c, h, b, r, glb):
    wl = CoreWorkload("mac", k, c, h, h, b, r, r, 1, h, h, 1)
    cfg = ArchConfig(1, 1, glb_per_core=glb, mac_per_core=64)
    s = schedule_workload(wl, cfg, E)
    ref = brute_force(wl, cfg)
    if not s.feasible:
        assert ref == math.inf
        return
    assert s.energy_pj * s.core_time == pytest.approx(ref, rel=1e-12)
    assert s.footprint <= glb
    assert s.mac_ops == k * c * h * h * b * r * r
    assert s.core_time >= s.mac_ops / (cfg.mac_per_core * cfg.freq_hz) * (1 - 1e-12)
    # each input read at least once, each output written at least once
    assert s.glb_traffic["ifmap"] >= b * c * h * h
    assert s.glb_traffic["weight"] >= k * c * r * r
    assert s.glb_traffic["ofmap"] >= k * h * h * b


def test_untiled_when_it_fits():
    wl = CoreWorkload("mac", 8, 8, 4, 4, 1, 1, 1, 1, 4, 4, 1)
    s = schedule_workload(wl, ArchConfig(1, 1), E)
    assert s.tiling == (8, 8, 4, 4, 1)
    assert s.glb_traffic == {"ifmap": 8 * 16, "weight": 64, "ofmap": 8 * 16}


def test_mac_bound_time():
    # 16 x 64 lanes fully used, plenty of reuse
    wl = CoreWorkload("mac", 64, 64, 8, 8, 1, 1, 1, 1, 8, 8, 1)
    cfg = ArchConfig(1, 1)
    s = schedule_workload(wl, cfg, E)
    assert s.core_time == pytest.approx(wl.mac_ops / (1024 * 1e9), rel=1e-12)


def test_glb_too_small_is_infeasible():
    wl = CoreWorkload("mac", 4, 4, 4, 4, 1, 3, 3, 1, 6, 6, 1)
    s = schedule_workload(wl, ArchConfig(1, 1, glb_per_core=16), E)
    assert not s.feasible and s.core_time == math.inf


def test_lanes_split():
    assert lanes(1024) == (16, 64) and lanes(8) == (8, 1)


def test_vector_layer_schedule():
    graph = zoo.transformer()
    lid = graph.by_name("b0_gelu").id
    lms = LpSpatialMapping((lid,), (LayerMapping(Partition4D(), (0,), (-1, -1, 0)),), 1)
    pws, _ = parse_lms(lms, graph, ArchConfig(1, 1), external_sources={}, check=False)
    s = explore_intracore(pws[0], graph, ArchConfig(1, 1), E)
    assert s.order == "vector" and s.mac_ops == 0 and s.vector_ops > 0
