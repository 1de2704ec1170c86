"""Command-line entry points: dse, map, eval, cost, compare."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from . import zoo
from .arch import ArchError, ArchGrid, Topology, enumerate_grid
from .costmodel import CostError, load_cost_params, total_cost
from .dse import (Objective, derive_seed, geomean, map_dnn, read_arch_file, run_dse,
                  write_best_arch, write_result_csv)
from .energy import EnergyTable
from .evaluator import evaluate_dnn, evaluate_lms, external_sources_for, heatmap_text
from .mapping import LpSpatialMapping, MappingError, stripe_initial_mapping
from .partition import dp_partition, stripe_cost_oracle
from .sa import write_trace
from .workload import ModelError, parse_model

LOG_ENV = "CHIPMAP_LOG"
log = logging.getLogger("chipmap")


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    args: dict
    seed: int
    threads: int
    inputs: dict = field(default_factory=dict)     # role -> resolved path
    tool_version: str = field(default_factory=_version)

    def write(self, out: Path) -> None:
        (out / "manifest.json").write_text(json.dumps(dataclasses.asdict(self), indent=1,
                                                      sort_keys=True) + "\n")


def load_models(refs, batch: int | None):
    """Model JSON files, or ``zoo:<name>`` for a built-in model."""
    graphs = []
    for ref in refs:
        if ref.startswith("zoo:"):
            name = ref[4:]
            if name not in zoo.MODELS:
                raise UsageError(f"unknown built-in model {name!r}; have {sorted(zoo.MODELS)}")
            g = zoo.MODELS[name]()
        else:
            g = parse_model(Path(ref).read_text())
        if batch is not None:
            g = dataclasses.replace(g, batch=batch)
        graphs.append(g)
    return graphs


def load_energy(path):
    return EnergyTable.load(path) if path else EnergyTable()


def load_grid(path) -> ArchGrid:
    return ArchGrid.from_dict(json.loads(Path(path).read_text()))


def make_out_dir(base, seed: int) -> Path:
    base = Path(base)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    out = base / f"{stamp}-seed{seed}"
    n = 1
    while out.exists():
        out = base / f"{stamp}-seed{seed}-{n}"
        n += 1
    out.mkdir(parents=True)
    return out


def _resolved(paths) -> list[str]:
    return [p if p.startswith("zoo:") else str(Path(p).resolve()) for p in paths]


def _manifest(args, out: Path, **inputs) -> None:
    a = {k: v for k, v in vars(args).items() if k != "func"}
    RunManifest(args.command, a, args.seed, args.threads, inputs).write(out)


# --- subcommands -------------------------------------------------------------------

def cmd_dse(args) -> int:
    graphs = load_models(args.models, args.batch)
    grid = load_grid(args.grid)
    if not any(p.valid for p in enumerate_grid(grid)):
        print("error: grid has no valid architecture candidate", file=sys.stderr)
        return 2
    log.info("dse over %d model(s), seed %d, %d worker(s)", len(graphs), args.seed, args.threads)
    res = run_dse(grid, graphs, Objective.parse(args.objective), load_cost_params(args.cost),
                  load_energy(args.energy), seed=args.seed, workers=args.threads,
                  budget_scale=args.sa_scale)
    log.info("%d ranked, %d failed, %d invalid", len(res.ranked), len(res.excluded),
             len(res.invalid))
    out = make_out_dir(args.out, args.seed)
    write_result_csv(res, out / "result.csv")
    _manifest(args, out, models=_resolved(args.models), grid=str(Path(args.grid).resolve()),
              cost=args.cost, energy=args.energy)
    if not res.ranked:
        print(f"error: every candidate failed; see {out / 'result.csv'}", file=sys.stderr)
        return 2
    write_best_arch(res.best.cfg, out / "best_arch.txt")
    print(res.best.cfg.describe())
    print(f"results in {out}")
    return 0


def _mapping_outputs(out: Path, graph, cfg, sa) -> None:
    doc = {"model": graph.name, "groups": [m.to_dict(graph) for m in sa.mappings]}
    (out / "mapping.json").write_text(json.dumps(doc, indent=1) + "\n")
    _write_report(out, sa.report, cfg)


def _write_report(out: Path, rep, cfg) -> None:
    doc = {"delay_s": rep.delay_s, "energy_j": rep.energy_j, "energy": rep.energy,
           "bottleneck": rep.bottleneck, "stage_times": rep.stage_times,
           "hops": rep.traffic.hops, "byte_hops": rep.traffic.byte_hops,
           "d2d_byte_hops": rep.traffic.d2d_byte_hops,
           "dram_read": {str(k): v for k, v in sorted(rep.traffic.dram_read.items())},
           "dram_write": {str(k): v for k, v in sorted(rep.traffic.dram_write.items())}}
    (out / "report.json").write_text(json.dumps(doc, indent=1) + "\n")
    (out / "heatmap.txt").write_text(heatmap_text(rep.traffic, cfg) + "\n")


def cmd_map(args) -> int:
    graphs = load_models(args.models, args.batch)
    if len(graphs) != 1:
        raise UsageError("map takes exactly one model")
    graph = graphs[0]
    cfg = read_arch_file(args.arch)
    energy = load_energy(args.energy)
    obj = Objective.parse(args.objective)
    sa = map_dnn(graph, cfg, energy, obj, derive_seed(args.seed, cfg, 0), args.sa_scale)
    log.info("annealed %d group(s) over %d iterations, %d accepted", len(sa.mappings),
             sa.iterations, sa.accepted)
    out = make_out_dir(args.out, args.seed)
    _mapping_outputs(out, graph, cfg, sa)
    if args.trace:
        write_trace(sa.trace, out / "trace.csv")
    _manifest(args, out, models=_resolved(args.models), arch=str(Path(args.arch).resolve()),
              energy=args.energy)
    rep = sa.report
    print(f"E={rep.energy_j:.6g} J  D={rep.delay_s:.6g} s  cost {sa.initial_cost:.6g} -> {sa.cost:.6g}")
    print(f"results in {out}")
    return 0


def cmd_eval(args) -> int:
    graphs = load_models(args.models, args.batch)
    if len(graphs) != 1:
        raise UsageError("eval takes exactly one model")
    graph = graphs[0]
    cfg = read_arch_file(args.arch)
    energy = load_energy(args.energy)
    doc = json.loads(Path(args.lms).read_text())
    groups = [LpSpatialMapping.from_dict(g, graph) for g in doc.get("groups", [doc])]
    covered = sorted(l for g in groups for l in g.layers)
    if covered != list(range(len(graph))):
        raise UsageError("mapping groups must cover every layer exactly once")
    ext = external_sources_for(groups, graph)
    topo = Topology(cfg)
    reports = [evaluate_lms(g, graph, cfg, energy, topo=topo, external_sources=ext)
               for g in groups]
    rep = evaluate_dnn(reports)
    out = make_out_dir(args.out, args.seed)
    _write_report(out, rep, cfg)
    _manifest(args, out, models=_resolved(args.models), arch=str(Path(args.arch).resolve()),
              lms=str(Path(args.lms).resolve()), energy=args.energy)
    print(f"E={rep.energy_j:.6g} J  D={rep.delay_s:.6g} s  bottleneck={rep.bottleneck}")
    return 0


def cmd_cost(args) -> int:
    cfg = read_arch_file(args.arch)
    b = total_cost(cfg, load_cost_params(args.cost))
    doc = {"arch": cfg.describe(), "die_areas_mm2": b.die_areas, "die_costs": b.die_costs,
           "silicon": b.silicon, "dram": b.dram, "packaging": b.packaging, "total": b.total}
    out = make_out_dir(args.out, args.seed)
    (out / "cost.json").write_text(json.dumps(doc, indent=1) + "\n")
    _manifest(args, out, arch=str(Path(args.arch).resolve()), cost=args.cost)
    print(f"{cfg.describe()}  MC=${b.total:.2f} (silicon {b.silicon:.2f}, "
          f"dram {b.dram:.2f}, packaging {b.packaging:.2f})")
    return 0


PAIRS = (("opt-arch", "sa-map"), ("base-arch", "stripe-map"), ("base-arch", "sa-map"))


def stripe_map_report(graph, cfg, energy, obj: Objective):
    """Baseline mapping: DP partition with stripe mappings and no annealing."""
    groups = dp_partition(graph, cfg, stripe_cost_oracle(graph, cfg, energy, obj.beta, obj.gamma))
    lms = [stripe_initial_mapping(g.layers, graph, cfg, g.batch_unit, i)
           for i, g in enumerate(groups)]
    topo = Topology(cfg)
    return evaluate_dnn([evaluate_lms(m, graph, cfg, energy, topo=topo) for m in lms])


def compare_rows(best_cfg, base_cfg, graphs, batches, energy, obj, seed, sa_scale=1.0):
    rows = []
    for g0 in graphs:
        for b in batches:
            g = dataclasses.replace(g0, batch=b)
            res = {}
            for arch_tag, map_tag in PAIRS:
                cfg = best_cfg if arch_tag == "opt-arch" else base_cfg
                if map_tag == "sa-map":
                    rep = map_dnn(g, cfg, energy, obj, derive_seed(seed, cfg, 0), sa_scale).report
                else:
                    rep = stripe_map_report(g, cfg, energy, obj)
                res[(arch_tag, map_tag)] = (rep.energy_j, rep.delay_s)
            e0, d0 = res[("base-arch", "stripe-map")]
            for (arch_tag, map_tag), (e, d) in res.items():
                rows.append({"model": g.name, "batch": b, "arch": arch_tag, "mapping": map_tag,
                             "E": e, "D": d, "E_norm": e / e0, "D_norm": d / d0})
    return rows


def cmd_compare(args) -> int:
    best = read_arch_file(args.best)
    base = read_arch_file(args.baseline)
    graphs = load_models(args.models, None)
    energy = load_energy(args.energy)
    obj = Objective.parse(args.objective)
    rows = compare_rows(best, base, graphs, args.batches, energy, obj, args.seed, args.sa_scale)
    out = make_out_dir(args.out, args.seed)
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["model", "batch", "arch", "mapping", "E", "D", "E_norm", "D_norm"]
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], (str, int)) else "%.10g" % r[c] for c in cols])
    cp = load_cost_params(args.cost)
    mc_best, mc_base = total_cost(best, cp).total, total_cost(base, cp).total
    _manifest(args, out, models=_resolved(args.models), best=str(Path(args.best).resolve()),
              baseline=str(Path(args.baseline).resolve()), energy=args.energy, cost=args.cost)
    top = [r for r in rows if (r["arch"], r["mapping"]) == PAIRS[0]]
    perf = geomean([1 / r["D_norm"] for r in top])
    eff = geomean([1 / r["E_norm"] for r in top])
    print(f"performance x{perf:.3f}  energy efficiency x{eff:.3f}  "
          f"MC {100 * (mc_best - mc_base) / mc_base:+.1f}%")
    print(f"results in {out}")
    return 0


# --- argument parsing -----------------------------------------------------------------

def _common(p, models=True):
    if models:
        p.add_argument("--models", nargs="+", required=True,
                       help="model JSON files or zoo:<name>")
        p.add_argument("--batch", type=int, help="override the models' batch size")
    p.add_argument("--energy", help="energy table JSON")
    p.add_argument("--cost", default="defaults-12nm", help="cost params JSON or profile name")
    p.add_argument("--objective", default="1,1,1", help="exponents a,b,g of MC^a E^b D^g")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="runs", help="parent of the run directory")
    p.add_argument("--sa-scale", type=float, default=1.0,
                   help="fraction of the default annealing budget")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chipmap", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dse", help="sweep an architecture grid")
    _common(p)
    p.add_argument("--grid", required=True)
    p.set_defaults(func=cmd_dse)

    p = sub.add_parser("map", help="search a mapping on one architecture")
    _common(p)
    p.add_argument("--arch", required=True)
    p.add_argument("--trace", action="store_true", help="write per-iteration trace.csv")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("eval", help="evaluate a given mapping file")
    _common(p)
    p.add_argument("--arch", required=True)
    p.add_argument("--lms", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cost", help="monetary cost of one architecture")
    _common(p, models=False)
    p.add_argument("--arch", required=True)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("compare", help="optimized vs baseline architecture and mapping")
    _common(p)
    p.add_argument("--best", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--batches", nargs="+", type=int, default=[1, 64])
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ModelError, ArchError, MappingError, CostError, ValueError,
            OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
