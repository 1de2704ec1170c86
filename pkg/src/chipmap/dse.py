"""Exhaustive architecture sweep with per-candidate mapping search."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from .arch import GB, KB, ArchConfig, ArchGrid, enumerate_grid, near_square
from .costmodel import CostParams, total_cost
from .energy import EnergyTable
from .partition import dp_partition, stripe_cost_oracle
from .sa import anneal, default_budget
from .workload import DnnGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Objective:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("objective exponents must be non-negative")
        if self.alpha == self.beta == self.gamma == 0:
            raise ValueError("objective exponents cannot all be zero")

    def value(self, mc: float, e: float, d: float) -> float:
        return mc ** self.alpha * e ** self.beta * d ** self.gamma

    @classmethod
    def parse(cls, text: str) -> "Objective":
        parts = [float(v) for v in text.split(",")]
        if len(parts) != 3:
            raise ValueError("objective needs three comma-separated exponents a,b,g")
        return cls(*parts)


def geomean(values: Sequence[float]) -> float:
    if any(v <= 0 for v in values):
        return 0.0 if all(math.isfinite(v) for v in values) else math.inf
    return math.exp(sum(math.log(v) for v in values) / len(values))


@dataclass
class CandidateResult:
    cfg: ArchConfig
    per_dnn: list = field(default_factory=list)    # (name, E_i, D_i)
    energy: float = math.nan
    delay: float = math.nan
    mc: float = math.nan
    objective: float = math.inf
    status: str = "ok"
    reason: str = ""
    mappings: dict = field(default_factory=dict, repr=False)   # dnn name -> SaResult

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class SearchSettings:
    seed: int = 0
    budget_scale: float = 1.0           # fraction of the default annealing budget
    keep_mappings: bool = False


def derive_seed(seed: int, cfg: ArchConfig, dnn_index: int) -> int:
    text = f"{seed}|{cfg.key()}|{cfg.topology}|{dnn_index}".encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "big")


def map_dnn(graph: DnnGraph, cfg: ArchConfig, energy: EnergyTable, objective: Objective,
            seed: int, budget_scale: float = 1.0):
    """Partition, then anneal every group; returns the annealing result."""
    groups = dp_partition(graph, cfg, stripe_cost_oracle(graph, cfg, energy,
                                                         objective.beta, objective.gamma))
    budget = max(1, int(default_budget(groups, cfg.n_cores) * budget_scale))
    return anneal(groups, graph, cfg, energy, budget=budget, seed=seed,
                  beta=objective.beta, gamma=objective.gamma)


def evaluate_candidate(cfg: ArchConfig, dnns: Sequence[DnnGraph], objective: Objective,
                       cost_params: CostParams, energy: EnergyTable,
                       settings: SearchSettings = SearchSettings()) -> CandidateResult:
    res = CandidateResult(cfg)
    try:
        res.mc = total_cost(cfg, cost_params).total
        for i, g in enumerate(dnns):
            sa = map_dnn(g, cfg, energy, objective, derive_seed(settings.seed, cfg, i),
                         settings.budget_scale)
            rep = sa.report
            res.per_dnn.append((g.name, rep.energy_j, rep.delay_s))
            if settings.keep_mappings:
                res.mappings[g.name] = sa
    except Exception as exc:        # one bad candidate must not stop the sweep
        log.warning("candidate %s failed: %s", cfg.describe(), exc)
        return replace(res, status="failed", reason=f"{type(exc).__name__}: {exc}")
    res.energy = geomean([e for _, e, _ in res.per_dnn])
    res.delay = geomean([d for _, _, d in res.per_dnn])
    if not (math.isfinite(res.energy) and math.isfinite(res.delay)):
        res.status, res.reason = "failed", "no feasible mapping"
        return res
    res.objective = objective.value(res.mc, res.energy, res.delay)
    return res


def _worker(args):
    return evaluate_candidate(*args)


def rank(results: Sequence[CandidateResult]) -> list[CandidateResult]:
    return sorted(results, key=lambda r: (r.objective, r.cfg.key()))


@dataclass
class DseResult:
    ranked: list                 # successful CandidateResult, best first
    excluded: list               # valid candidates that failed, with reasons
    invalid: list                # GridPoint rejected before evaluation
    dnn_names: list

    @property
    def best(self) -> CandidateResult:
        if not self.ranked:
            raise RuntimeError("no candidate produced a result")
        return self.ranked[0]


def run_many(cfgs: Sequence[ArchConfig], dnns, objective, cost_params, energy,
             settings: SearchSettings, workers: int = 1) -> list[CandidateResult]:
    jobs = [(c, list(dnns), objective, cost_params, energy, settings) for c in cfgs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_worker, jobs))
    return [_worker(j) for j in jobs]


def run_dse(grid: ArchGrid | dict, dnns: Sequence[DnnGraph], objective: Objective = Objective(),
            cost_params: CostParams | None = None, energy: EnergyTable | None = None,
            seed: int = 0, workers: int = 1, budget_scale: float = 1.0) -> DseResult:
    if not dnns:
        raise ValueError("need at least one DNN")
    cost_params = cost_params or CostParams()
    energy = energy or EnergyTable()
    points = list(enumerate_grid(grid))
    valid = [p.cfg for p in points if p.valid]
    invalid = [p for p in points if not p.valid]
    if not valid:
        raise ValueError("grid has no valid architecture candidate")
    settings = SearchSettings(seed, budget_scale)
    results = run_many(valid, dnns, objective, cost_params, energy, settings, workers)
    ok = [r for r in results if r.ok]
    bad = [r for r in results if not r.ok]
    return DseResult(rank(ok), bad, invalid, [g.name for g in dnns])


# --- reporting -----------------------------------------------------------------

ARCH_COLUMNS = ["chiplets", "cores", "dram_bw_GBps", "noc_bw_GBps", "d2d_bw_GBps",
                "glb_KB", "mac_per_core", "x_cut", "y_cut"]


def _num(v) -> str:
    if isinstance(v, int):
        return str(v)
    return "%.10g" % v


def _arch_fields(cfg: ArchConfig) -> list[str]:
    return [_num(cfg.n_chiplets), _num(cfg.n_cores), _num(cfg.dram_bw_total / GB),
            _num(cfg.noc_bw / GB), _num(cfg.d2d_bw / GB), _num(cfg.glb_per_core // KB),
            _num(cfg.mac_per_core), _num(cfg.x_cut), _num(cfg.y_cut)]


def write_result_csv(result: DseResult, path) -> None:
    names = result.dnn_names
    header = ["rank"] + ARCH_COLUMNS + [f"{p}_{n}" for n in names for p in ("E", "D")] + \
        ["E", "D", "MC", "objective", "status", "reason"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, r in enumerate(result.ranked, 1):
            per = [_num(x) for _, e, d in r.per_dnn for x in (e, d)]
            w.writerow([i] + _arch_fields(r.cfg) + per +
                       [_num(r.energy), _num(r.delay), _num(r.mc), _num(r.objective), "ok", ""])
        blank = [""] * (2 * len(names) + 4)
        for r in sorted(result.excluded, key=lambda r: r.cfg.key()):
            w.writerow([""] + _arch_fields(r.cfg) + blank + ["failed", r.reason])
        for p in result.invalid:
            prm = p.params
            arch = ["", "", _num(prm["dram_bw_per_tops"]), _num(prm["noc_bw"]),
                    _num(prm["noc_bw"] * prm["d2d_bw_ratio"]), _num(prm["glb_per_core"]),
                    _num(prm["mac_per_core"]), _num(prm["x_cut"]), _num(prm["y_cut"])]
            w.writerow([""] + arch + blank + ["invalid", p.reason])


def write_best_arch(cfg: ArchConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(cfg.describe() + "\n")
        fh.write("# config: " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")


def read_arch_file(path) -> ArchConfig:
    """Accepts a best_arch.txt (uses its config line) or a plain JSON config."""
    with open(path) as fh:
        text = fh.read()
    for line in text.splitlines():
        if line.startswith("# config:"):
            return ArchConfig.from_dict(json.loads(line[len("# config:"):])).validate()
    return ArchConfig.from_dict(json.loads(text)).validate()


# --- joint exploration ------------------------------------------------------------

def tile_up(cfg: ArchConfig, multiplier: int) -> ArchConfig:
    """Reuse the chiplet of `cfg` `multiplier` times in a larger accelerator.

    Extra chiplets go along the longer mesh axis first (near-square factor
    split of the multiplier); DRAM bandwidth scales with compute.
    """
    if multiplier < 1:
        raise ValueError("multiplier must be positive")
    fa, fb = near_square(multiplier)
    if cfg.cores_x >= cfg.cores_y:
        fx, fy = fa, fb
    else:
        fx, fy = fb, fa
    cw, ch = cfg.chiplet_dims
    big = replace(cfg, cores_x=cfg.cores_x * fx, cores_y=cfg.cores_y * fy,
                  x_cut=cfg.x_cut * fx, y_cut=cfg.y_cut * fy,
                  dram_bw_total=cfg.dram_bw_total * multiplier,
                  dram_count=0 if multiplier > 1 else cfg.dram_count)
    if big.n_chiplets == 1 and multiplier > 1:
        raise ValueError("tiling produced a monolithic design")
    assert big.chiplet_dims == (cw, ch)
    return big.validate()


@dataclass
class JointResult:
    low: CandidateResult
    high: CandidateResult
    product: float


def run_joint_dse(grid_low: ArchGrid | dict | Sequence[ArchConfig], multiplier: int,
                  dnns: Sequence[DnnGraph], objective: Objective = Objective(),
                  cost_params: CostParams | None = None, energy: EnergyTable | None = None,
                  seed: int = 0, workers: int = 1, budget_scale: float = 1.0):
    """Rank low-power candidates by the product of their own objective and
    that of the accelerator tiled from the same chiplet.

    Returns (ranked JointResult list, skipped [(cfg, reason)]).
    """
    cost_params = cost_params or CostParams()
    energy = energy or EnergyTable()
    if isinstance(grid_low, (ArchGrid, dict)):
        lows = [p.cfg for p in enumerate_grid(grid_low) if p.valid]
    else:
        lows = list(grid_low)
    pairs, skipped = [], []
    for c in lows:
        if c.n_chiplets == 1 and multiplier > 1:
            skipped.append((c, "monolithic chiplet cannot be replicated"))
            continue
        try:
            pairs.append((c, tile_up(c, multiplier)))
        except Exception as exc:
            skipped.append((c, str(exc)))
    settings = SearchSettings(seed, budget_scale)
    flat = [c for pair in pairs for c in pair]
    results = run_many(flat, dnns, objective, cost_params, energy, settings, workers)
    out = []
    for i, (c, big) in enumerate(pairs):
        lo, hi = results[2 * i], results[2 * i + 1]
        if not (lo.ok and hi.ok):
            skipped.append((c, lo.reason or hi.reason))
            continue
        out.append(JointResult(lo, hi, lo.objective * hi.objective))
    out.sort(key=lambda j: (j.product, j.low.cfg.key()))
    return out, skipped
