"""How monetary cost and mapped efficiency move as a 36-core chip is cut finer.

The first table needs no mapping at all.  The second anneals a small
resnet on each cut.  All cuts share one 6x6 mesh, so every mapping found
is valid on every cut; each cut is then scored with the best of them,
which removes most of the annealing noise from the comparison.

MC alone bottoms out at a few chiplets, while energy climbs steadily as
more traffic crosses die boundaries.  Whether the product MC x E x D
has an interior minimum depends on the workload: for this single
convolutional model the monolithic die still wins, whereas a mix that
adds a large attention block (see the acceptance suite) favours two
chiplets.
"""
import sys

from chipmap import (ArchConfig, CostParams, EnergyTable, Objective, Topology, evaluate_dnn,
                     evaluate_lms, total_cost, zoo)
from chipmap.costmodel import d2d_area_share
from chipmap.dse import SearchSettings, evaluate_candidate
from chipmap.evaluator import external_sources_for

cuts = [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (6, 3), (6, 6)]
params = CostParams()
scale = float(sys.argv[1]) if len(sys.argv) > 1 else 0.05

print("chiplets  silicon    dram  packaging   total  d2d-area")
for xc, yc in cuts:
    cfg = ArchConfig(6, 6, xc, yc)
    b = total_cost(cfg, params)
    print(f"{cfg.n_chiplets:8d} {b.silicon:8.2f} {b.dram:7.2f} {b.packaging:10.2f} "
          f"{b.total:7.2f} {d2d_area_share(cfg, params):9.1%}")

model = zoo.resnet_like(channels=64, batch=8)
energy = EnergyTable()
print(f"\nannealing {model.name} at budget scale {scale}")
found = {}
for xc, yc in cuts:
    cfg = ArchConfig(6, 6, xc, yc)
    found[cfg] = evaluate_candidate(cfg, [model], Objective(), params, energy,
                                    SearchSettings(0, scale, keep_mappings=True))


def score(maps, cfg):
    topo, ext = Topology(cfg), external_sources_for(maps, model)
    return evaluate_dnn([evaluate_lms(m, model, cfg, energy, topo=topo, external_sources=ext)
                         for m in maps])


print("chiplets       MC         E         D   objective")
for cfg, res in found.items():
    rep = min((score(r.mappings[model.name].mappings, cfg) for r in found.values()),
              key=lambda r: r.cost())
    print(f"{cfg.n_chiplets:8d} {res.mc:8.2f} {rep.energy_j:9.4g} {rep.delay_s:9.4g} "
          f"{res.mc * rep.energy_j * rep.delay_s:11.4g}")
