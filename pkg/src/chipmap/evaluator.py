"""Global evaluation: link traffic, DRAM profile, stage delay and energy."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .arch import ArchConfig, Link, Node, Topology
from .energy import CLOCK_EMBEDDED, EnergyTable
from .intracore import CoreSchedule, explore_intracore
from .mapping import CommDependency, LpSpatialMapping, parse_lms
from .workload import DnnGraph, depth_of

COMPONENTS = ("mac", "glb", "dram", "noc", "d2d")


@dataclass
class TrafficMap:
    link_bytes: dict = field(default_factory=dict)        # directed link -> bytes
    link_kind: dict = field(default_factory=dict)
    dram_read: dict = field(default_factory=dict)         # dram id -> bytes
    dram_write: dict = field(default_factory=dict)
    hops: int = 0                                         # link traversals, unweighted
    byte_hops: float = 0.0
    d2d_byte_hops: float = 0.0

    def dram_bytes(self, d: int) -> float:
        return self.dram_read.get(d, 0.0) + self.dram_write.get(d, 0.0)

    @property
    def total_dram_bytes(self) -> float:
        return sum(self.dram_read.values()) + sum(self.dram_write.values())

    def bytes_of_kind(self, kind: str) -> float:
        return sum(b for l, b in self.link_bytes.items() if self.link_kind[l] == kind)

    def flit_hops(self, flit_bytes: int) -> float:
        return self.byte_hops / flit_bytes

    def d2d_flit_hops(self, flit_bytes: int) -> float:
        return self.d2d_byte_hops / flit_bytes

    def scaled(self, factor: float) -> "TrafficMap":
        return TrafficMap({l: b * factor for l, b in self.link_bytes.items()},
                          dict(self.link_kind),
                          {d: b * factor for d, b in self.dram_read.items()},
                          {d: b * factor for d, b in self.dram_write.items()},
                          int(self.hops * factor), self.byte_hops * factor,
                          self.d2d_byte_hops * factor)

    def merged(self, other: "TrafficMap") -> "TrafficMap":
        out = self.scaled(1.0)
        for l, b in other.link_bytes.items():
            out.link_bytes[l] = out.link_bytes.get(l, 0.0) + b
            out.link_kind[l] = other.link_kind[l]
        for src, dst in ((other.dram_read, out.dram_read), (other.dram_write, out.dram_write)):
            for d, b in src.items():
                dst[d] = dst.get(d, 0.0) + b
        out.hops += other.hops
        out.byte_hops += other.byte_hops
        out.d2d_byte_hops += other.d2d_byte_hops
        return out


def _node(topo: Topology, ep) -> Node:
    return topo.cfg.coord(ep[1])


def dependency_links(topo: Topology, src, dsts) -> tuple[Link, ...]:
    """Links loaded by one dependency; a link appears once per flow crossing it.

    A DRAM source sends one flow per controller port in use, each port
    serving the destinations nearest to it.
    """
    cache = topo.dep_links
    key = (src, dsts)
    hit = cache.get(key)
    if hit is not None:
        return hit
    if src[0] == "dram":
        by_port: dict[Node, list[Node]] = defaultdict(list)
        for d in dsts:
            dn = _node(topo, d)
            by_port[topo.nearest_port(src[1], dn)].append(dn)
        flows = sorted(by_port.items())
    else:
        sn = _node(topo, src)
        flows = [(sn, [topo.nearest_port(d[1], sn) if d[0] == "dram" else _node(topo, d)
                       for d in dsts])]
    links: list[Link] = []
    for sn, dns in flows:
        if len(dns) == 1:
            links.extend(topo.route(sn, dns[0]))
        else:
            union: dict[Link, None] = {}
            for dn in dns:
                union.update(dict.fromkeys(topo.route(sn, dn)))
            links.extend(union)
    hit = cache[key] = tuple(links)
    return hit


def route_traffic(deps: Iterable[CommDependency], topo: Topology) -> TrafficMap:
    """Accumulate dependency bytes on directed links under dimension-ordered routing.

    A multicast counts its payload once on every link of the union of its
    paths.  DRAM endpoints use the controller port nearest the counterpart.
    """
    tm = TrafficMap()
    lb: dict[Link, float] = defaultdict(float)
    kind = topo.kind
    reads, writes = tm.dram_read, tm.dram_write
    hops = 0
    byte_hops = 0.0
    for dep in deps:
        nbytes = dep.bytes
        if nbytes <= 0:
            continue
        if dep.src[0] == "dram":
            reads[dep.src[1]] = reads.get(dep.src[1], 0.0) + nbytes
        else:
            for d in dep.dsts:
                if d[0] == "dram":
                    writes[d[1]] = writes.get(d[1], 0.0) + nbytes
        links = dependency_links(topo, dep.src, dep.dsts)
        for l in links:
            lb[l] += nbytes
        hops += len(links)
        byte_hops += nbytes * len(links)
    tm.link_bytes = dict(lb)
    tm.link_kind = {l: kind[l] for l in lb}
    tm.hops = hops
    tm.byte_hops = byte_hops
    tm.d2d_byte_hops = sum(b for l, b in tm.link_bytes.items() if tm.link_kind[l] == "d2d")
    return tm


@dataclass
class EvalReport:
    delay_s: float
    energy: dict                          # component -> joules
    traffic: TrafficMap                   # totals over the whole run
    stage_time: float = 0.0
    stage_times: list = field(default_factory=list)
    bottleneck: str = "compute"
    stage_traffic: TrafficMap | None = None
    n_units: int = 1
    depth: int = 1
    feasible: bool = True

    @property
    def energy_j(self) -> float:
        return float(sum(self.energy.values()))

    def cost(self, beta: float = 1.0, gamma: float = 1.0) -> float:
        if not self.feasible:
            return math.inf
        return self.energy_j ** beta * self.delay_s ** gamma


def infeasible_report() -> EvalReport:
    return EvalReport(math.inf, {c: math.inf for c in COMPONENTS}, TrafficMap(),
                      math.inf, [math.inf], "compute", feasible=False)


def _resident_weight_deps(deps, workloads, schedules, cfg):
    """Weight transfers whose destinations can keep them in GLB across units."""
    wbytes: dict[int, float] = defaultdict(float)
    for dep in deps:
        if dep.tensor == "weight":
            for d in dep.dsts:
                wbytes[d[1]] += dep.bytes
    fp: dict[int, int] = defaultdict(int)
    for pw, s in zip(workloads, schedules):
        fp[pw.core] = max(fp[pw.core], s.footprint)
    resident = {c for c in wbytes if wbytes[c] + fp[c] <= cfg.glb_per_core}
    once, per_unit = [], []
    for dep in deps:
        if dep.tensor == "weight" and all(d[1] in resident for d in dep.dsts):
            once.append(dep)
        else:
            per_unit.append(dep)
    return once, per_unit


def _network_times(tm: TrafficMap, topo: Topology) -> tuple[float, str]:
    worst, tag = 0.0, "compute"
    for l, b in tm.link_bytes.items():
        t = b / topo.bandwidth(l)
        if t > worst:
            worst, tag = t, ("d2d-link" if tm.link_kind[l] == "d2d" else "noc-link")
    per_dram = topo.cfg.dram_bw_each
    for d in set(tm.dram_read) | set(tm.dram_write):
        t = tm.dram_bytes(d) / per_dram
        if t > worst:
            worst, tag = t, "dram-bw"
    return worst, tag


def _noc_energy_pj(tm: TrafficMap, energy: EnergyTable) -> tuple[float, float]:
    noc_bytes = sum(b for l, b in tm.link_bytes.items() if tm.link_kind[l] != "d2d")
    d2d_bytes = sum(b for l, b in tm.link_bytes.items() if tm.link_kind[l] == "d2d")
    return noc_bytes / energy.flit_bytes * energy.noc_pj_per_flit_per_hop, d2d_bytes


def evaluate_group(lms: LpSpatialMapping, workloads, deps: Sequence[CommDependency],
                   schedules: Sequence[CoreSchedule], cfg: ArchConfig, energy: EnergyTable,
                   *, batch: int, depth: int = 1, topo: Topology | None = None) -> EvalReport:
    """Delay and energy of one layer group processing `batch` samples.

    stage time = max(per-core busy time, per-link bytes / bandwidth,
    per-DRAM bytes / per-DRAM bandwidth); the group runs
    ``n_units + depth - 1`` stages plus a one-off load of GLB-resident
    weights.
    """
    if any(not s.feasible for s in schedules):
        return infeasible_report()
    topo = topo or Topology(cfg)
    n_units = math.ceil(batch / lms.batch_unit)

    busy: dict[int, float] = defaultdict(float)
    mac_pj = glb_pj = 0.0
    for pw, s in zip(workloads, schedules):
        busy[pw.core] += s.core_time
        compute = s.mac_ops * energy.mac_pj + s.vector_ops * energy.vector_pj
        mac_pj += compute
        glb_pj += s.energy_pj - compute
    compute_time = max(busy.values(), default=0.0)

    once, per_unit = _resident_weight_deps(deps, workloads, schedules, cfg)
    stage_tm = route_traffic(per_unit, topo)
    net_time, net_tag = _network_times(stage_tm, topo)
    if compute_time >= net_time:
        stage_time, tag = compute_time, "compute"
    else:
        stage_time, tag = net_time, net_tag
    once_tm = route_traffic(once, topo)
    prologue, _ = _network_times(once_tm, topo)
    delay = stage_time * (n_units + depth - 1) + prologue

    total_tm = stage_tm.scaled(n_units).merged(once_tm)
    noc_pj, d2d_bytes = _noc_energy_pj(total_tm, energy)
    if energy.d2d_model == CLOCK_EMBEDDED:
        d2d_j = topo.n_d2d_links * energy.d2d_power_w * delay
    else:
        d2d_j = d2d_bytes * 8 * energy.d2d_pj_per_bit * 1e-12
    e = {
        "mac": mac_pj * n_units * 1e-12,
        "glb": glb_pj * n_units * 1e-12,
        "dram": total_tm.total_dram_bytes * energy.dram_pj_per_byte * 1e-12,
        "noc": noc_pj * 1e-12,
        "d2d": d2d_j,
    }
    return EvalReport(delay, e, total_tm, stage_time, [stage_time], tag, stage_tm,
                      n_units, depth)


def schedule_all(workloads, graph: DnnGraph, cfg: ArchConfig, energy: EnergyTable):
    return [explore_intracore(pw, graph, cfg, energy) for pw in workloads]


def evaluate_lms(lms: LpSpatialMapping, graph: DnnGraph, cfg: ArchConfig, energy: EnergyTable,
                 *, batch: int | None = None, topo: Topology | None = None,
                 external_sources: dict | None = None, check: bool = True,
                 cache: dict | None = None) -> EvalReport:
    """Parse, schedule every partitioned workload, and evaluate one group."""
    workloads, deps = parse_lms(lms, graph, cfg, external_sources, check=check, cache=cache)
    schedules = schedule_all(workloads, graph, cfg, energy)
    return evaluate_group(lms, workloads, deps, schedules, cfg, energy,
                          batch=graph.batch if batch is None else batch,
                          depth=depth_of(graph, lms.layers), topo=topo)


def evaluate_dnn(reports: Sequence[EvalReport]) -> EvalReport:
    """Groups run back to back: delays and energies add.

    Boundary tensors are already charged inside each group (written by the
    producer group, read by the consumer group).
    """
    if not reports:
        raise ValueError("no groups to evaluate")
    if any(not r.feasible for r in reports):
        return infeasible_report()
    energy = {c: sum(r.energy[c] for r in reports) for c in COMPONENTS}
    tm = reports[0].traffic
    for r in reports[1:]:
        tm = tm.merged(r.traffic)
    worst = max(reports, key=lambda r: r.delay_s)
    return EvalReport(sum(r.delay_s for r in reports), energy, tm,
                      max(r.stage_time for r in reports),
                      [r.stage_time for r in reports], worst.bottleneck, None,
                      sum(r.n_units for r in reports), max(r.depth for r in reports))


def external_sources_for(group_lms: Sequence[LpSpatialMapping], graph: DnnGraph) -> dict[int, int]:
    """Producer layer -> DRAM holding its ofmaps, across all groups."""
    out = {}
    for lms in group_lms:
        for lid, lm in lms.items():
            if lm.fd[2] >= 0:
                out[lid] = lm.fd[2]
    return out


def heatmap_text(tm: TrafficMap, cfg: ArchConfig, *, double_d2d: bool = False,
                 unit: float = 1.0) -> str:
    """Text grid of per-link load; each router row is followed by its vertical links.

    Horizontal entries give the heavier direction of the link right of a
    router, vertical entries the link below; d2d links carry a ``*``.
    """
    def load(a, b):
        v = max(tm.link_bytes.get((a, b), 0.0), tm.link_bytes.get((b, a), 0.0))
        is_d2d = tm.link_kind.get((a, b), tm.link_kind.get((b, a))) == "d2d"
        if is_d2d and double_d2d:
            v *= 2
        return f"{v / unit:9.3g}{'*' if is_d2d else ' '}"

    lines = []
    X, Y = cfg.cores_x, cfg.cores_y
    for y in range(Y):
        row = []
        for x in range(-1, X):
            row.append(f"[{'IO' if x < 0 else cfg.core_at(x, y):>3}]")
            row.append(load((x, y), (x + 1, y)))
        row.append("[IO ]")
        lines.append(" ".join(row))
        if y + 1 < Y:
            # one router cell plus its right-hand link is 17 characters wide
            vert = [" " * 16]
            for x in range(X):
                vert.append(load((x, y), (x, y + 1)) + " " * 6)
            lines.append(" ".join(vert))
    return "\n".join(lines)
