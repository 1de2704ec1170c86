"""Anneal an attention block on a two-chiplet 6x6 mesh and compare with stripes.

The stripe baseline gives each layer a contiguous block of cores.  Annealing
is free to interleave groups, and tends to keep heavy flows off the
die-to-die boundary.  Pass a budget scale below 1 for a quicker run.
"""
import sys

from chipmap import ArchConfig, EnergyTable, LayerGroup, anneal, evaluate_lms, stripe_initial_mapping
from chipmap import zoo
from chipmap.evaluator import heatmap_text
from chipmap.sa import default_budget

scale = float(sys.argv[1]) if len(sys.argv) > 1 else 0.3
graph = zoo.attention_head()
cfg = ArchConfig(6, 6, 2, 1)
energy = EnergyTable()
group = LayerGroup((0, 1, 2), batch_unit=8, depth=2)

stripe = stripe_initial_mapping(group.layers, graph, cfg, group.batch_unit)
base = evaluate_lms(stripe, graph, cfg, energy)
budget = max(1, int(default_budget([group], cfg.n_cores) * scale))
sa = anneal([group], graph, cfg, energy, budget=budget, seed=0)
best = sa.reports[0]


def row(label, rep):
    t = rep.traffic
    print(f"{label:8s} hops {t.hops:6d}  d2d byte-hops {t.d2d_byte_hops:12.4g}  "
          f"E {rep.energy_j:.4g} J  D {rep.delay_s:.4g} s")


print(f"{budget} proposals, {sa.accepted} accepted")
row("stripe", base)
row("anneal", best)
for lid, m in zip(sa.mappings[0].layers, sa.mappings[0].mappings):
    print(f"  {graph[lid].name}: part {m.part} cores {m.cg}")
print("\nannealed stage traffic (d2d links marked *)")
print(heatmap_text(best.stage_traffic, cfg, unit=1e3))
