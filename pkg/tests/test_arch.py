import pytest
from hypothesis import given, strategies as st

from chipmap.arch import (GB, MB, ArchConfig, ArchError, ArchGrid, Topology, cores_for,
                          dram_ports, enumerate_candidates, enumerate_grid, near_square)


def test_core_count_from_tops():
    assert cores_for(72, 1024) == 36
    assert cores_for(72, 2048) == 18
    assert cores_for(72, 1000) is None
    assert near_square(36) == (6, 6) and near_square(18) == (6, 3) and near_square(7) == (7, 1)


def small_grid(**kw):
    d = dict(x_cut=[1, 2, 4], y_cut=[1, 2], dram_bw_per_tops=[2.0], noc_bw=[32],
             d2d_bw_ratio=[0.5, 1.0], glb_per_core=[1024, 2048], mac_per_core=[1024])
    d.update(kw)
    return ArchGrid.from_dict(d)


def test_grid_enumeration_reasons_and_dedup():
    points = list(enumerate_grid(small_grid()))
    bad = [p for p in points if not p.valid]
    # x_cut=4 does not divide 6
    assert bad and all("x_cut=4" in p.reason for p in bad)
    good = [p.cfg for p in points if p.valid]
    # monolithic appears once per GLB size, with d2d == noc
    mono = [c for c in good if c.n_chiplets == 1]
    assert len(mono) == 2 and all(c.d2d_bw == c.noc_bw for c in mono)
    assert len(good) == len(set(good))
    assert good[0].cores_x == 6 and good[0].dram_bw_total == 144 * GB


def test_grid_errors():
    with pytest.raises(ArchError, match="missing"):
        ArchGrid.from_dict({"x_cut": [1]})
    with pytest.raises(ArchError, match="TOPs"):
        list(enumerate_grid(small_grid(mac_per_core=[1000])))
    with pytest.raises(ArchError):
        list(enumerate_grid(small_grid(glb_per_core=[])))


def test_candidates_mac_split():
    cands = enumerate_candidates(small_grid(mac_per_core=[1024, 2048], x_cut=[1], y_cut=[1],
                                            d2d_bw_ratio=[1.0], glb_per_core=[2048]))
    assert {(c.cores_x, c.cores_y) for c in cands} == {(6, 6), (6, 3)}


def test_describe_tuple():
    cfg = ArchConfig(6, 6, 2, 1)
    assert cfg.describe() == "(2, 36, 144GB/s, 32GB/s, 16GB/s, 2MB, 1024)"
    assert ArchConfig(6, 6).describe().endswith("None, 2MB, 1024)")
    assert ArchConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.dram_count == 4 and ArchConfig(2, 2, dram_bw_total=64 * GB).dram_count == 2


def test_validation():
    with pytest.raises(ArchError, match="x_cut"):
        ArchConfig(6, 6, 4, 1).validate()
    with pytest.raises(ArchError, match="d2d_bw exceeds"):
        ArchConfig(2, 2, 2, 1, d2d_bw=64 * GB).validate()


def test_d2d_link_count():
    assert Topology(ArchConfig(6, 6, 2, 1)).n_d2d_links == 6
    assert Topology(ArchConfig(6, 6, 2, 2)).n_d2d_links == 12
    assert Topology(ArchConfig(6, 6)).n_d2d_links == 0
    t = Topology(ArchConfig(6, 6, 6, 6))
    assert t.n_d2d_links == 2 * 6 * 5
    assert len(t.undirected("noc")) == 0


def test_xy_route():
    t = Topology(ArchConfig(3, 2))
    assert t.route((0, 0), (2, 1)) == (((0, 0), (1, 0)), ((1, 0), (2, 0)), ((2, 0), (2, 1)))
    assert t.route((1, 1), (1, 1)) == ()


def test_torus_takes_short_way():
    t = Topology(ArchConfig(5, 1, topology="folded_torus"))
    assert t.hops((0, 0), (4, 0)) == 1
    assert Topology(ArchConfig(5, 1)).hops((0, 0), (4, 0)) == 4


def test_ports_cover_rows():
    cfg = ArchConfig(6, 6, dram_count=4)
    ports = dram_ports(cfg)
    assert sorted(ports) == [1, 2, 3, 4]
    rows = sorted(p[1] for d in ports for p in ports[d])
    assert rows == sorted(list(range(6)) * 2)
    assert all(p[0] == -1 for p in ports[1] + ports[2])
    assert all(p[0] == 6 for p in ports[3] + ports[4])
    t = Topology(cfg)
    # the port link is an io link, never d2d, and runs at noc bandwidth
    link = ((-1, 0), (0, 0))
    assert t.kind[link] == "io" and t.bandwidth(link) == cfg.noc_bw


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 35), st.integers(0, 35))
def test_route_is_manhattan_on_mesh(x, y, a, b):
    cfg = ArchConfig(x, y)
    a, b = a % cfg.n_cores, b % cfg.n_cores
    t = Topology(cfg)
    (ax, ay), (bx, by) = cfg.coord(a), cfg.coord(b)
    path = t.route((ax, ay), (bx, by))
    assert len(path) == abs(ax - bx) + abs(ay - by)
    for (p, q), (r, _) in zip(path, path[1:]):
        assert q == r
    # X first, then Y
    turned = False
    for p, q in path:
        if p[0] == q[0]:
            turned = True
        else:
            assert not turned


def test_glb_units():
    assert ArchConfig(2, 2).glb_per_core == 2 * MB
