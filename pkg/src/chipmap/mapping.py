"""Layer-centric encoding of layer-pipeline spatial mappings.

A mapping of one layer group assigns every layer a partition of its output
cube (h, w, b, k cuts), an ordered core group and DRAM bindings for the
flows that need explicit management.  `parse_lms` turns an encoding into
per-core workloads plus the communication dependencies between cores and
DRAMs.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Sequence

from .arch import ArchConfig
from .workload import DnnGraph, Layer, LayerKind, layer_flops

Box = tuple[tuple[int, int], tuple[int, int], tuple[int, int], tuple[int, int]]
Endpoint = tuple[str, int]       # ("core", id) or ("dram", id >= 1)

IF, WGT, OF = 0, 1, 2


class MappingError(ValueError):
    pass


def core(i: int) -> Endpoint:
    return ("core", i)


def dram(d: int) -> Endpoint:
    return ("dram", d)


@dataclass(frozen=True)
class Partition4D:
    h: int = 1
    w: int = 1
    b: int = 1
    k: int = 1

    @property
    def size(self) -> int:
        return self.h * self.w * self.b * self.k

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.h, self.w, self.b, self.k)


@dataclass(frozen=True)
class LayerMapping:
    part: Partition4D
    cg: tuple[int, ...]
    fd: tuple[int, int, int] = (-1, -1, -1)

    def to_dict(self) -> dict:
        return {"part": list(self.part.as_tuple()), "cg": list(self.cg), "fd": list(self.fd)}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerMapping":
        return cls(Partition4D(*[int(v) for v in d["part"]]),
                   tuple(int(c) for c in d["cg"]), tuple(int(v) for v in d["fd"]))


@dataclass(frozen=True)
class LpSpatialMapping:
    layers: tuple[int, ...]
    mappings: tuple[LayerMapping, ...]
    batch_unit: int = 1
    group_id: int = 0

    def __getitem__(self, layer_id: int) -> LayerMapping:
        return self.mappings[self.layers.index(layer_id)]

    def __len__(self) -> int:
        return len(self.layers)

    def items(self):
        return zip(self.layers, self.mappings)

    def with_layer(self, layer_id: int, lm: LayerMapping) -> "LpSpatialMapping":
        i = self.layers.index(layer_id)
        maps = list(self.mappings)
        maps[i] = lm
        return replace(self, mappings=tuple(maps))

    def to_dict(self, graph: DnnGraph | None = None) -> dict:
        names = [graph[l].name if graph else l for l in self.layers]
        return {"group": self.group_id, "batch_unit": self.batch_unit,
                "layers": [dict(layer=n, **m.to_dict()) for n, m in zip(names, self.mappings)]}

    @classmethod
    def from_dict(cls, d: dict, graph: DnnGraph | None = None) -> "LpSpatialMapping":
        ids, maps = [], []
        for entry in d["layers"]:
            ref = entry["layer"]
            ids.append(graph.by_name(ref).id if isinstance(ref, str) else int(ref))
            maps.append(LayerMapping.from_dict(entry))
        return cls(tuple(ids), tuple(maps), int(d.get("batch_unit", 1)), int(d.get("group", 0)))


def dump_lms(lms: LpSpatialMapping, graph: DnnGraph | None = None) -> str:
    return json.dumps(lms.to_dict(graph))


def load_lms(text: str, graph: DnnGraph | None = None) -> LpSpatialMapping:
    return LpSpatialMapping.from_dict(json.loads(text), graph)


@dataclass(frozen=True)
class PartitionedWorkload:
    layer: int
    index: tuple[int, int, int, int]
    nid: int
    core: int
    ofmap: Box
    # (source layer id or None for the DNN input, box in the source's ofmap coords)
    ifmaps: tuple[tuple[int | None, Box], ...]
    weight_k: tuple[int, int] | None

    @property
    def extents(self) -> tuple[int, int, int, int]:
        return tuple(hi - lo for lo, hi in self.ofmap)


@dataclass(frozen=True)
class CommDependency:
    src: Endpoint
    dsts: tuple[Endpoint, ...]
    bytes: float
    tensor: str          # "ifmap" | "weight" | "ofmap" | "fmap"
    layer: int

    @property
    def is_multicast(self) -> bool:
        return len(self.dsts) > 1

    def touches_dram(self) -> bool:
        return self.src[0] == "dram" or any(d[0] == "dram" for d in self.dsts)


# --- geometry ----------------------------------------------------------------

def split(n: int, parts: int) -> list[tuple[int, int]]:
    """Near-equal ranges; the first n % parts ranges get one extra element."""
    base, extra = divmod(n, parts)
    out, lo = [], 0
    for i in range(parts):
        hi = lo + base + (1 if i < extra else 0)
        out.append((lo, hi))
        lo = hi
    return out


def box_volume(box: Box) -> int:
    v = 1
    for lo, hi in box:
        v *= max(0, hi - lo)
    return v


def intersect(a: Box, b: Box) -> Box | None:
    out = []
    for (a0, a1), (b0, b1) in zip(a, b):
        lo, hi = max(a0, b0), min(a1, b1)
        if lo >= hi:
            return None
        out.append((lo, hi))
    return tuple(out)


def receptive(o0: int, o1: int, stride: int, r: int, n_in: int, n_out: int) -> tuple[int, int]:
    """Input rows needed for output rows [o0, o1), padding centred."""
    pad = max(0, ((n_out - 1) * stride + r - n_in) // 2)
    lo = o0 * stride - pad
    hi = (o1 - 1) * stride - pad + r
    return max(0, lo), min(n_in, hi)


def input_regions(graph: DnnGraph, layer: Layer, ofbox: Box) -> list[tuple[int | None, Box]]:
    """Regions of each ifmap source needed to produce `ofbox`."""
    (h0, h1), (w0, w1), bb, (k0, k1) = ofbox
    srcs: list[int | None] = list(layer.predecessors) or [None]
    shapes = graph.source_shapes(layer)
    kind = layer.kind
    out = []
    if kind in (LayerKind.CONV, LayerKind.FC, LayerKind.POOL):
        r, s, _ = layer.kernel
        hin, win = shapes[0][0], shapes[0][1]
        hr = receptive(h0, h1, layer.stride, r, hin, layer.H)
        wr = receptive(w0, w1, layer.stride, s, win, layer.W)
        off = 0
        for src, sh in zip(srcs, shapes):
            if kind == LayerKind.POOL:
                lo, hi = max(k0, off), min(k1, off + sh[2])
                if lo < hi:
                    out.append((src, (hr, wr, bb, (lo - off, hi - off))))
            else:
                out.append((src, (hr, wr, bb, (0, sh[2]))))
            off += sh[2]
    elif kind in (LayerKind.ELTWISE, LayerKind.ACTIVATION):
        for src in srcs:
            out.append((src, ofbox))
    elif kind == LayerKind.MATMUL:
        a, b = srcs
        out.append((a, ((h0, h1), (w0, w1), bb, (0, layer.kernel[2]))))
        if layer.b_layout == "nt":
            out.append((b, ((k0, k1), (0, 1), bb, (0, layer.kernel[2]))))
        else:
            out.append((b, ((0, layer.kernel[2]), (0, 1), bb, (k0, k1))))
    return out


def layer_extents(layer: Layer, batch_unit: int) -> tuple[int, int, int, int]:
    return (layer.H, layer.W, batch_unit, layer.K)


def ofmap_boxes(layer: Layer, part: Partition4D, batch_unit: int):
    """Yield (index, nid, box) in NID order."""
    H, W, B, K = layer_extents(layer, batch_unit)
    hs, ws, bs, ks = split(H, part.h), split(W, part.w), split(B, part.b), split(K, part.k)
    nid = 0
    for ih, hr in enumerate(hs):
        for iw, wr in enumerate(ws):
            for ib, br in enumerate(bs):
                for ik, kr in enumerate(ks):
                    yield (ih, iw, ib, ik), nid, (hr, wr, br, kr)
                    nid += 1


def nid_of(index: tuple[int, int, int, int], part: Partition4D) -> int:
    h, w, b, k = index
    return h * part.w * part.b * part.k + w * part.b * part.k + b * part.k + k


# --- validity ------------------------------------------------------------------

def required_fd(graph: DnnGraph, layer_id: int, group: Iterable[int]) -> tuple[bool, bool, bool]:
    """Which of (ifmap, weight, ofmap) flows need an explicit DRAM binding."""
    members = set(group)
    layer = graph[layer_id]
    cons = graph.consumers[layer_id]
    need_of = not cons or any(c not in members for c in cons)
    return layer.is_input, layer.has_weights, need_of


def mapping_problems(lms: LpSpatialMapping, graph: DnnGraph, cfg: ArchConfig) -> list[str]:
    probs = []
    M, D = cfg.n_cores, cfg.dram_count
    if len(set(lms.layers)) != len(lms.layers):
        probs.append("duplicate layer in group")
    if lms.batch_unit < 1:
        probs.append("batch_unit must be positive")
    for lid, lm in lms.items():
        layer = graph[lid]
        name = layer.name
        caps = layer_extents(layer, lms.batch_unit)
        part = lm.part.as_tuple()
        if min(part) < 1:
            probs.append(f"{name}: partition cuts must be positive")
        for dim, cut, cap in zip("HWBK", part, caps):
            if cut > cap:
                probs.append(f"{name}: {dim} cut {cut} exceeds extent {cap}")
        if len(lm.cg) != lm.part.size:
            probs.append(f"{name}: |CG|={len(lm.cg)} != partition product {lm.part.size}")
        if len(set(lm.cg)) != len(lm.cg):
            probs.append(f"{name}: duplicate core in CG")
        if any(c < 0 or c >= M for c in lm.cg):
            probs.append(f"{name}: core id outside [0, {M})")
        if len(lm.fd) != 3:
            probs.append(f"{name}: FD needs three entries")
            continue
        for v in lm.fd:
            if v < -1 or v > D:
                probs.append(f"{name}: FD value {v} outside [-1, {D}]")
        need = required_fd(graph, lid, lms.layers)
        for flow, v, req in zip(("ifmap", "weight", "ofmap"), lm.fd, need):
            if req and v < 0:
                probs.append(f"{name}: {flow} flow needs a DRAM binding")
            if not req and v >= 0:
                probs.append(f"{name}: {flow} flow must be -1")
    return probs


def check_lms(lms: LpSpatialMapping, graph: DnnGraph, cfg: ArchConfig) -> None:
    probs = mapping_problems(lms, graph, cfg)
    if probs:
        raise MappingError("; ".join(probs))


# --- parsing -------------------------------------------------------------------

def _dram_targets(d: int, D: int, nbytes: float) -> list[tuple[int, float]]:
    if d == 0:
        return [(i, nbytes / D) for i in range(1, D + 1)]
    return [(d, nbytes)]


def _layer_pws(graph, lid, lm, bu, cache):
    key = ("pw", lid, lm.part, lm.cg, bu)
    hit = cache.get(key)
    if hit is None:
        layer = graph[lid]
        wk = layer.has_weights
        hit = [PartitionedWorkload(lid, index, nid, lm.cg[nid], box,
                                   tuple(input_regions(graph, layer, box)),
                                   box[3] if wk else None)
               for index, nid, box in ofmap_boxes(layer, lm.part, bu)]
        cache[key] = hit
    return hit


def _fmap_deps(cons, prods, src, eb, lid):
    """On-chip transfers of producer `src` pieces to the consumer workloads."""
    groups: dict[tuple, set[int]] = defaultdict(set)
    for pw in cons:
        for s, need in pw.ifmaps:
            if s != src:
                continue
            for prod in prods:
                piece = intersect(need, prod.ofmap)
                if piece is not None:
                    groups[(prod.core, piece)].add(pw.core)
    return [CommDependency(core(pcore), tuple(core(c) for c in sorted(dsts)),
                           float(box_volume(piece) * eb), "fmap", lid)
            for (pcore, piece), dsts in groups.items()]


def _dram_deps(graph, lid, lm, pws, sources, D, eb):
    """DRAM reads of ifmaps and weights and DRAM writes of ofmaps for one layer.

    `sources` maps each off-group ifmap source (None for the DNN input) to
    its DRAM.
    """
    layer = graph[lid]
    deps = []
    groups: dict[tuple, set[int]] = defaultdict(set)
    for pw in pws:
        for src, need in pw.ifmaps:
            if src in sources:
                groups[(sources[src], need)].add(pw.core)
    for (d, need), dsts in groups.items():
        for dd, nb in _dram_targets(d, D, float(box_volume(need) * eb)):
            deps.append(CommDependency(dram(dd), tuple(core(c) for c in sorted(dsts)),
                                       nb, "ifmap", lid))
    wgt_src, of_dst = lm.fd[1], lm.fd[2]
    if layer.has_weights and wgt_src >= 0:
        per_k = layer.kernel[0] * layer.kernel[1] * layer.kernel[2] * eb
        wgroups: dict[tuple[int, int], set[int]] = defaultdict(set)
        for pw in pws:
            wgroups[pw.weight_k].add(pw.core)
        for (k0, k1), dsts in wgroups.items():
            for dd, nb in _dram_targets(wgt_src, D, float((k1 - k0) * per_k)):
                deps.append(CommDependency(dram(dd), tuple(core(c) for c in sorted(dsts)),
                                           nb, "weight", lid))
    if of_dst >= 0:
        for pw in pws:
            for dd, nb in _dram_targets(of_dst, D, float(box_volume(pw.ofmap) * eb)):
                deps.append(CommDependency(core(pw.core), (dram(dd),), nb, "ofmap", lid))
    return deps


def parse_lms(lms: LpSpatialMapping, graph: DnnGraph, cfg: ArchConfig,
              external_sources: dict[int, int] | None = None,
              check: bool = True, cache: dict | None = None):
    """Expand an encoded mapping into partitioned workloads and dependencies.

    `external_sources` maps a producer layer outside the group to the DRAM
    its ofmaps were written to (default 0: interleaved).  `cache` may be a
    dict reused across calls on the same graph and architecture; per-layer
    results are memoised in it.  Returns ``(workloads, deps)``.
    """
    if check:
        check_lms(lms, graph, cfg)
    external_sources = external_sources or {}
    cache = {} if cache is None else cache
    eb = graph.elem_bytes
    D = cfg.dram_count
    members = set(lms.layers)
    bu = lms.batch_unit

    pws = {lid: _layer_pws(graph, lid, lm, bu, cache) for lid, lm in lms.items()}
    deps: list[CommDependency] = []
    for lid, lm in lms.items():
        preds = graph[lid].predecessors
        for src in dict.fromkeys(preds):
            if src in members:
                plm = lms[src]
                key = ("fm", lid, lm.part, lm.cg, src, plm.part, plm.cg, bu)
                hit = cache.get(key)
                if hit is None:
                    hit = cache[key] = _fmap_deps(pws[lid], pws[src], src, eb, lid)
                deps.extend(hit)
        if preds:
            sources = {p: external_sources.get(p, 0) for p in preds if p not in members}
        else:
            sources = {None: lm.fd[0]}
        key = ("dr", lid, lm, bu, tuple(sorted(sources.items(), key=str)), D)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = _dram_deps(graph, lid, lm, pws[lid], sources, D, eb)
        deps.extend(hit)
    workloads = [pw for lid in lms.layers for pw in pws[lid]]
    return workloads, deps


# --- factorizations and the stripe heuristic --------------------------------

@lru_cache(maxsize=None)
def factorizations(n: int, caps: tuple[int, int, int, int]) -> tuple[tuple[int, int, int, int], ...]:
    """Ordered (h, w, b, k) with product n and each factor within its cap."""
    out = []
    divs = [d for d in range(1, n + 1) if n % d == 0]
    for h in divs:
        if h > caps[0]:
            break
        r1 = n // h
        for w in divs:
            if w > caps[1] or r1 % w:
                continue
            r2 = r1 // w
            for b in divs:
                if b > caps[2] or r2 % b:
                    continue
                k = r2 // b
                if k <= caps[3]:
                    out.append((h, w, b, k))
    return tuple(out)


def feasible_sizes(layer: Layer, batch_unit: int, limit: int) -> list[int]:
    caps = layer_extents(layer, batch_unit)
    return [n for n in range(1, limit + 1) if factorizations(n, caps)]


def stripe_part(layer: Layer, n: int, batch_unit: int) -> Partition4D:
    """K cuts first, then batch, then H, then W."""
    opts = factorizations(n, layer_extents(layer, batch_unit))
    if not opts:
        raise MappingError(f"{layer.name}: {n} cores cannot partition the layer")
    h, w, b, k = max(opts, key=lambda t: (t[3], t[2], t[0], t[1]))
    return Partition4D(h, w, b, k)


def snake_order(cfg: ArchConfig) -> list[int]:
    order = []
    for y in range(cfg.cores_y):
        xs = range(cfg.cores_x) if y % 2 == 0 else range(cfg.cores_x - 1, -1, -1)
        order.extend(cfg.core_at(x, y) for x in xs)
    return order


def proportional_counts(weights: Sequence[float], total: int) -> list[int]:
    """Largest-remainder apportionment with at least one unit each."""
    n = len(weights)
    if n > total:
        raise MappingError(f"{n} layers cannot share {total} cores")
    wsum = float(sum(weights)) or 1.0
    quotas = [total * w / wsum if sum(weights) else total / n for w in weights]
    counts = [max(1, int(math.floor(q))) for q in quotas]
    while sum(counts) > total:
        i = max((i for i in range(n) if counts[i] > 1), key=lambda i: (counts[i] - quotas[i], -i))
        counts[i] -= 1
    rem = sorted(range(n), key=lambda i: (-(quotas[i] - counts[i]), i))
    j = 0
    while sum(counts) < total:
        counts[rem[j % n]] += 1
        j += 1
    return counts


def stripe_initial_mapping(group: Sequence[int], graph: DnnGraph, cfg: ArchConfig,
                           batch_unit: int = 1, group_id: int = 0) -> LpSpatialMapping:
    """Contiguous core strips sized by FLOPs; all managed flows interleaved."""
    group = list(group)
    M = cfg.n_cores
    if len(group) > M:
        raise MappingError(f"group of {len(group)} layers exceeds {M} cores")
    layers = [graph[l] for l in group]
    flops = [layer_flops(l, batch_unit) for l in layers]
    counts = proportional_counts(flops, M)
    # shrink to sizes the layer can actually be cut into, then hand spare cores out
    spare = 0
    for i, l in enumerate(layers):
        sizes = feasible_sizes(l, batch_unit, counts[i])
        spare += counts[i] - sizes[-1]
        counts[i] = sizes[-1]
    while spare:
        cands = [i for i, l in enumerate(layers)
                 if factorizations(counts[i] + 1, layer_extents(l, batch_unit))]
        if not cands:
            break
        i = max(cands, key=lambda i: (flops[i] / counts[i], -i))
        counts[i] += 1
        spare -= 1
    order = snake_order(cfg)
    maps, pos = [], 0
    for l, n in zip(layers, counts):
        cg = tuple(order[pos:pos + n])
        pos += n
        need = required_fd(graph, l.id, group)
        fd = tuple(0 if r else -1 for r in need)
        maps.append(LayerMapping(stripe_part(l, n, batch_unit), cg, fd))
    return LpSpatialMapping(tuple(group), tuple(maps), batch_unit, group_id)


# --- space size ----------------------------------------------------------------

def lms_space_size(n_layers: int, n_cores: int) -> int:
    """Lower bound on the number of encodable mappings of N layers on M cores."""
    N, M = n_layers, n_cores
    if not 1 <= N <= M - 1:
        raise ValueError(f"space size undefined for N={N}, M={M} (needs 1 <= N <= M-1)")
    total = sum(math.comb(N, i) * math.comb(M - N - 1, N - i - 1) * 4 ** (N - i)
                for i in range(N))
    return math.factorial(M) * total


@lru_cache(maxsize=None)
def partition_count(m: int) -> int:
    """Number of integer partitions of m."""
    if m < 0:
        raise ValueError("m must be non-negative")
    p = [1] + [0] * m
    for part in range(1, m + 1):
        for total in range(part, m + 1):
            p[total] += p[total - part]
    return p[m]


def tangram_space_size(n_layers: int, n_cores: int) -> int:
    if n_cores < 1:
        raise ValueError("need at least one core")
    return n_layers * partition_count(n_cores)
