"""Simulated annealing over layer-pipeline spatial mappings."""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field, replace
from typing import Sequence

from .arch import ArchConfig, Topology
from .energy import EnergyTable
from .evaluator import EvalReport, evaluate_dnn, evaluate_lms, external_sources_for
from .mapping import (LayerMapping, LpSpatialMapping, Partition4D, check_lms, factorizations,
                      layer_extents, lms_space_size, stripe_initial_mapping)
from .partition import LayerGroup
from .workload import DnnGraph

OPS = ("OP1", "OP2", "OP3", "OP4", "OP5")
MAX_RETRIES = 32
WARMUP = 100


def log_space_size(n_layers: int, n_cores: int) -> float:
    try:
        return math.log(lms_space_size(n_layers, n_cores))
    except ValueError:
        # N >= M has no closed form; count one ordering of the cores per layer slot
        return math.lgamma(n_cores + 1) + n_layers * math.log(4)


def group_weights(sizes: Sequence[tuple[int, int]]) -> list[float]:
    """Selection probabilities proportional to space sizes, computed from logs."""
    logs = [log_space_size(n, m) for n, m in sizes]
    top = max(logs)
    w = [math.exp(l - top) for l in logs]
    s = sum(w)
    return [x / s for x in w]


def select_group(weights: Sequence[float], rng: random.Random) -> int:
    if len(weights) == 1:
        return 0
    return rng.choices(range(len(weights)), weights=weights)[0]


@dataclass
class OpContext:
    graph: DnnGraph
    cfg: ArchConfig

    def caps(self, lms: LpSpatialMapping, lid: int):
        return layer_extents(self.graph[lid], lms.batch_unit)


def _random_part(ctx, lms, lid, n, rng, exclude=None):
    opts = [p for p in factorizations(n, ctx.caps(lms, lid)) if p != exclude]
    if not opts:
        return None
    return Partition4D(*rng.choice(opts))


def _op1(lms, rng, ctx):
    lid = rng.choice(lms.layers)
    lm = lms[lid]
    part = _random_part(ctx, lms, lid, len(lm.cg), rng, exclude=lm.part.as_tuple())
    if part is None:
        return None
    return lms.with_layer(lid, replace(lm, part=part))


def _op2(lms, rng, ctx):
    cands = [l for l, m in lms.items() if len(m.cg) >= 2]
    if not cands:
        return None
    lid = rng.choice(cands)
    lm = lms[lid]
    i, j = rng.sample(range(len(lm.cg)), 2)
    cg = list(lm.cg)
    cg[i], cg[j] = cg[j], cg[i]
    return lms.with_layer(lid, replace(lm, cg=tuple(cg)))


def _op3(lms, rng, ctx):
    if len(lms) < 2:
        return None
    a, b = rng.sample(lms.layers, 2)
    ma, mb = lms[a], lms[b]
    i, j = rng.randrange(len(ma.cg)), rng.randrange(len(mb.cg))
    ca, cb = ma.cg[i], mb.cg[j]
    if ca == cb or ca in mb.cg or cb in ma.cg:
        return None
    cga, cgb = list(ma.cg), list(mb.cg)
    cga[i], cgb[j] = cb, ca
    return lms.with_layer(a, replace(ma, cg=tuple(cga))).with_layer(b, replace(mb, cg=tuple(cgb)))


def _op4(lms, rng, ctx):
    if len(lms) < 2:
        return None
    donors = [l for l, m in lms.items() if len(m.cg) >= 2]
    if not donors:
        return None
    a = rng.choice(donors)
    b = rng.choice([l for l in lms.layers if l != a])
    ma, mb = lms[a], lms[b]
    c = rng.choice(ma.cg)
    if c in mb.cg:
        return None
    pa = _random_part(ctx, lms, a, len(ma.cg) - 1, rng)
    pb = _random_part(ctx, lms, b, len(mb.cg) + 1, rng)
    if pa is None or pb is None:
        return None
    cga = tuple(x for x in ma.cg if x != c)
    cgb = list(mb.cg)
    cgb.insert(rng.randrange(len(cgb) + 1), c)
    return lms.with_layer(a, LayerMapping(pa, cga, ma.fd)).with_layer(
        b, LayerMapping(pb, tuple(cgb), mb.fd))


def _op5(lms, rng, ctx):
    slots = [(l, i) for l, m in lms.items() for i, v in enumerate(m.fd) if v >= 0]
    if not slots:
        return None
    lid, i = rng.choice(slots)
    lm = lms[lid]
    vals = [v for v in range(ctx.cfg.dram_count + 1) if v != lm.fd[i]]
    fd = list(lm.fd)
    fd[i] = rng.choice(vals)
    return lms.with_layer(lid, replace(lm, fd=tuple(fd)))


_APPLY = {"OP1": _op1, "OP2": _op2, "OP3": _op3, "OP4": _op4, "OP5": _op5}


def applicable_ops(lms: LpSpatialMapping) -> list[str]:
    ops = ["OP1"]
    if any(len(m.cg) >= 2 for _, m in lms.items()):
        ops.append("OP2")
    if len(lms) >= 2:
        ops.append("OP3")
        if any(len(m.cg) >= 2 for _, m in lms.items()):
            ops.append("OP4")
    if any(v >= 0 for _, m in lms.items() for v in m.fd):
        ops.append("OP5")
    return ops


def apply_operator(lms: LpSpatialMapping, op: str, rng: random.Random,
                   ctx: OpContext) -> LpSpatialMapping:
    """One move of kind `op`; infeasible draws are retried, then the input is returned."""
    fn = _APPLY[op]
    for _ in range(MAX_RETRIES):
        out = fn(lms, rng, ctx)
        if out is not None:
            return out
    return lms


def propose(lms: LpSpatialMapping, rng: random.Random, ctx: OpContext):
    """Pick an applicable operator uniformly and apply it; returns (op, new lms)."""
    ops = applicable_ops(lms)
    for _ in range(MAX_RETRIES):
        op = rng.choice(ops)
        out = _APPLY[op](lms, rng, ctx)
        if out is not None:
            return op, out
    return op, lms


@dataclass
class SaResult:
    mappings: list                        # LpSpatialMapping per group
    reports: list                         # EvalReport per group
    cost: float
    initial_cost: float
    iterations: int = 0
    accepted: int = 0
    t0: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def report(self) -> EvalReport:
        return evaluate_dnn(self.reports)


class _Evaluator:
    """Group cost with cross-group DRAM sources taken from the current state."""

    def __init__(self, graph, cfg, energy, beta, gamma):
        self.graph, self.cfg, self.energy = graph, cfg, energy
        self.beta, self.gamma = beta, gamma
        self.topo = Topology(cfg)
        self.cache: dict = {}
        self.parse_cache: dict = {}

    def __call__(self, lms: LpSpatialMapping, ext: dict) -> EvalReport:
        relevant = tuple(sorted((p, ext.get(p, 0)) for l in lms.layers
                                for p in self.graph[l].predecessors if p not in lms.layers))
        key = (lms, relevant)
        hit = self.cache.get(key)
        if hit is None:
            hit = evaluate_lms(lms, self.graph, self.cfg, self.energy, topo=self.topo,
                               external_sources=dict(relevant), check=False,
                               cache=self.parse_cache)
            if len(self.cache) > 50_000:
                self.cache.clear()
            if len(self.parse_cache) > 200_000:
                self.parse_cache.clear()
            self.cache[key] = hit
        return hit

    def cost(self, report: EvalReport) -> float:
        return report.cost(self.beta, self.gamma)


def _downstream(groups_lms, gid, graph) -> list[int]:
    """Groups reading an ofmap produced in group `gid`."""
    produced = set(groups_lms[gid].layers)
    out = []
    for h, lms in enumerate(groups_lms):
        if h != gid and any(p in produced for l in lms.layers for p in graph[l].predecessors):
            out.append(h)
    return out


def default_budget(groups: Sequence, n_cores: int) -> int:
    return sum(200 * len(g.layers) * n_cores for g in groups)


def anneal(groups: Sequence[LayerGroup], graph: DnnGraph, cfg: ArchConfig,
           energy: EnergyTable | None = None, *, budget: int | None = None, seed: int = 0,
           beta: float = 1.0, gamma: float = 1.0, t0: float | None = None,
           initial: Sequence[LpSpatialMapping] | None = None,
           trace: bool = False) -> SaResult:
    """Anneal all groups jointly; the total cost is the sum of group costs.

    Temperature starts at the mean |dC| of warm-up proposals (or `t0`) and
    is multiplied by 0.98 every budget/40 iterations.
    """
    energy = energy or EnergyTable()
    rng = random.Random(seed)
    ctx = OpContext(graph, cfg)
    ev = _Evaluator(graph, cfg, energy, beta, gamma)
    M = cfg.n_cores
    if initial is not None:
        state = list(initial)
        for s in state:
            check_lms(s, graph, cfg)
    else:
        state = [stripe_initial_mapping(g.layers, graph, cfg, g.batch_unit, gid)
                 for gid, g in enumerate(groups)]
    weights = group_weights([(len(s.layers), M) for s in state])
    downstream = [_downstream(state, g, graph) for g in range(len(state))]

    ext = external_sources_for(state, graph)
    reports = [ev(s, ext) for s in state]
    costs = [ev.cost(r) for r in reports]
    total = sum(costs)
    init_total = total
    budget = default_budget(state, M) if budget is None else budget
    if budget <= 0:
        raise ValueError("budget must be positive")

    def proposal():
        g = select_group(weights, rng)
        op, new = propose(state[g], rng, ctx)
        touched = [g]
        if any(a.fd[2] != b.fd[2] for a, b in zip(state[g].mappings, new.mappings)):
            touched += downstream[g]
        trial = list(state)
        trial[g] = new
        text = external_sources_for(trial, graph) if len(touched) > 1 else ext
        new_reports = {h: ev(trial[h], text) for h in touched}
        delta = sum(ev.cost(new_reports[h]) - costs[h] for h in touched)
        if math.isnan(delta):       # inf - inf: both infeasible
            delta = 0.0 if all(math.isinf(ev.cost(r)) for r in new_reports.values()) else math.inf
        return g, op, new, text, new_reports, delta

    if t0 is None:
        deltas = []
        for _ in range(WARMUP):
            d = proposal()[-1]
            if math.isfinite(d):
                deltas.append(abs(d))
        t0 = sum(deltas) / len(deltas) if deltas else 0.0
    T = t0
    period = max(1, budget // 40)
    best = (total, list(state), list(reports))
    log = []
    accepted = 0
    for it in range(budget):
        g, op, new, text, new_reports, delta = proposal()
        ok = delta <= 0 or (T > 0 and math.isfinite(delta) and rng.random() < math.exp(-delta / T))
        if ok:
            state[g] = new
            ext = text
            for h, r in new_reports.items():
                reports[h] = r
                costs[h] = ev.cost(r)
            total = sum(costs)
            accepted += 1
            if total < best[0]:
                best = (total, list(state), list(reports))
        if trace:
            log.append((it, g, op, int(ok), total))
        if (it + 1) % period == 0:
            T *= 0.98
    return SaResult(best[1], best[2], best[0], init_total, budget, accepted, t0, log)


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "group", "op", "accepted", "cost"])
        for it, g, op, ok, cost in rows:
            w.writerow([it, g, op, ok, f"{cost:.10g}"])
