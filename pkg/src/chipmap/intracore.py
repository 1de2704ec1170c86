"""Exhaustive tiling / loop-order search for one partitioned workload."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .arch import ArchConfig
from .energy import EnergyTable
from .mapping import PartitionedWorkload, box_volume
from .workload import DnnGraph, LayerKind, VECTOR_KINDS

ORDERS = ("WS", "OS", "IS")
C_LANES = 16


def lanes(mac_per_core: int) -> tuple[int, int]:
    """(c_lanes, k_lanes) of the PE array."""
    cl = min(C_LANES, mac_per_core)
    return cl, max(1, mac_per_core // cl)


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


@dataclass(frozen=True)
class CoreWorkload:
    """Loop nest of one partitioned workload as the core sees it."""
    kind: str                 # "mac" or "vector"
    k: int
    c: int
    h: int
    w: int
    b: int
    r: int = 1
    s: int = 1
    stride: int = 1
    in_h: int = 1
    in_w: int = 1
    elem_bytes: int = 1
    # vector kinds only
    ops: int = 0
    in_elems: int = 0

    @property
    def mac_ops(self) -> int:
        if self.kind != "mac":
            return 0
        return self.k * self.c * self.h * self.w * self.b * self.r * self.s


def core_workload(pw: PartitionedWorkload, graph: DnnGraph) -> CoreWorkload:
    layer = graph[pw.layer]
    h, w, b, k = pw.extents
    eb = graph.elem_bytes
    if layer.kind in VECTOR_KINDS:
        in_elems = sum(box_volume(box) for _, box in pw.ifmaps)
        per = 1
        if layer.kind == LayerKind.POOL:
            per = layer.kernel[0] * layer.kernel[1]
        elif layer.kind == LayerKind.ELTWISE:
            per = max(1, len(pw.ifmaps) - 1)
        return CoreWorkload("vector", k, 0, h, w, b, elem_bytes=eb,
                            ops=h * w * b * k * per, in_elems=in_elems)
    if layer.kind == LayerKind.MATMUL:
        return CoreWorkload("mac", k, layer.kernel[2], h, w, b, 1, 1, 1, h, w, eb)
    r, s, c = layer.kernel
    (ih0, ih1), (iw0, iw1) = pw.ifmaps[0][1][0], pw.ifmaps[0][1][1]
    return CoreWorkload("mac", k, c, h, w, b, r, s, layer.stride, ih1 - ih0, iw1 - iw0, eb)


@dataclass(frozen=True)
class CoreSchedule:
    tiling: tuple[int, int, int, int, int]      # tile sizes (k, c, h, w, b)
    order: str
    glb_traffic: dict                            # bytes per tensor moved in/out of GLB
    array_accesses: float                        # GLB <-> PE array accesses (elements)
    mac_ops: int
    vector_ops: int
    core_time: float
    energy_pj: float
    footprint: int
    feasible: bool = True

    @property
    def glb_bytes(self) -> float:
        return float(sum(self.glb_traffic.values()))


def _infeasible(wl: CoreWorkload) -> CoreSchedule:
    return CoreSchedule((0, 0, 0, 0, 0), "none", {}, 0.0, wl.mac_ops, wl.ops,
                        math.inf, math.inf, 0, feasible=False)


def tile_costs(wl: CoreWorkload, tk, tc, th, tw, tb, order: str, mac_per_core: int,
               freq_hz: float, glb_bw_per_cycle: int, mac_pj: float, glb_pj: float):
    """Vectorisable cost model for one tiling; arrays broadcast elementwise.

    Returns (footprint_bytes, glb_traffic_elems per tensor, array_accesses,
    core_time, energy_pj).
    """
    eb = wl.elem_bytes
    ih = np.minimum((th - 1) * wl.stride + wl.r, wl.in_h)
    iw = np.minimum((tw - 1) * wl.stride + wl.s, wl.in_w)
    if_tile = tb * tc * ih * iw
    w_tile = tk * tc * wl.r * wl.s
    o_tile = tb * tk * th * tw
    footprint = 2 * (if_tile + w_tile + o_tile) * eb
    nk, nc = wl.k // tk, wl.c // tc
    nsp = (wl.b // tb) * (wl.h // th) * (wl.w // tw)
    if_all = nsp * nc * if_tile
    w_all = wl.k * wl.c * wl.r * wl.s
    o_all = wl.k * wl.h * wl.w * wl.b
    if order == "OS":
        t_if, t_w, t_o = if_all * nk, w_all * nsp, o_all
    elif order == "WS":
        t_if, t_w, t_o = if_all * nk, w_all, o_all * (2 * nc - 1)
    else:
        t_if, t_w, t_o = if_all, w_all * nsp, o_all * (2 * nc - 1)
    cl, kl = lanes(mac_per_core)
    macs = wl.mac_ops
    arr = macs / np.minimum(tk, kl) + macs / (tb * th * tw) + macs / np.minimum(tc, cl)
    n_tiles = nk * nc * nsp
    cycles = n_tiles * np.ceil(tc / cl) * np.ceil(tk / kl) * tb * th * tw * wl.r * wl.s
    traffic_bytes = (t_if + t_w + t_o + arr) * eb
    core_time = np.maximum(cycles / freq_hz, traffic_bytes / (glb_bw_per_cycle * freq_hz))
    energy = macs * mac_pj + traffic_bytes * glb_pj
    return footprint, (t_if, t_w, t_o), arr, core_time, energy


@lru_cache(maxsize=200_000)
def _explore_cached(wl: CoreWorkload, mac_per_core: int, glb_per_core: int, freq_hz: float,
                    glb_bw_per_cycle: int, mac_pj: float, vector_pj: float,
                    glb_pj: float) -> CoreSchedule:
    eb = wl.elem_bytes
    if wl.kind == "vector":
        vl = max(1, mac_per_core // C_LANES)
        traffic = {"ifmap": wl.in_elems * eb, "ofmap": wl.k * wl.h * wl.w * wl.b * eb}
        tb = sum(traffic.values())
        t = max(math.ceil(wl.ops / vl) / freq_hz, tb / (glb_bw_per_cycle * freq_hz))
        return CoreSchedule((wl.k, 0, wl.h, wl.w, wl.b), "vector", traffic, 0.0, 0, wl.ops,
                            t, wl.ops * vector_pj + tb * glb_pj, 0)
    dims = [np.array(divisors(n), dtype=np.float64) for n in (wl.k, wl.c, wl.h, wl.w, wl.b)]
    shape = [len(d) for d in dims]
    grids = []
    for i, d in enumerate(dims):
        sh = [1] * 5
        sh[i] = len(d)
        grids.append(d.reshape(sh))
    best = None
    for order in ORDERS:
        fp, _, _, t, e = tile_costs(wl, *grids, order, mac_per_core, freq_hz,
                                    glb_bw_per_cycle, mac_pj, glb_pj)
        fp = np.broadcast_to(fp, shape)
        edp = np.broadcast_to(e * t, shape)
        edp = np.where(fp <= glb_per_core, edp, np.inf)
        idx = int(np.argmin(edp))
        val = edp.flat[idx]
        if np.isfinite(val) and (best is None or val < best[0]):
            best = (val, order, np.unravel_index(idx, shape))
    if best is None:
        return _infeasible(wl)
    _, order, ix = best
    tk, tc, th, tw, tb = (int(dims[i][ix[i]]) for i in range(5))
    fp, (t_if, t_w, t_o), arr, t, e = tile_costs(wl, tk, tc, th, tw, tb, order, mac_per_core,
                                                 freq_hz, glb_bw_per_cycle, mac_pj, glb_pj)
    traffic = {"ifmap": float(t_if) * eb, "weight": float(t_w) * eb, "ofmap": float(t_o) * eb}
    return CoreSchedule((tk, tc, th, tw, tb), order, traffic, float(arr), wl.mac_ops, 0,
                        float(t), float(e), int(fp))


def schedule_workload(wl: CoreWorkload, cfg: ArchConfig, energy: EnergyTable) -> CoreSchedule:
    return _explore_cached(wl, cfg.mac_per_core, cfg.glb_per_core, float(cfg.freq_hz),
                           cfg.glb_bw_per_cycle, energy.mac_pj, energy.vector_pj,
                           energy.glb_pj_per_byte)


def explore_intracore(pw: PartitionedWorkload, graph: DnnGraph, cfg: ArchConfig,
                      energy: EnergyTable) -> CoreSchedule:
    """Minimum energy x delay schedule of `pw` on one core."""
    return schedule_workload(core_workload(pw, graph), cfg, energy)
