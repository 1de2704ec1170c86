"""Write a mapping by hand, parse it, and look at what the evaluator sees.

Two convolution layers share a 3x2 mesh.  The first layer is split four
ways over cores 2,1,5,4 and reads its inputs and weights from DRAM 1; the
second runs on cores 0 and 3 and streams its result to DRAM 2.
"""
from chipmap import (ArchConfig, EnergyTable, LayerMapping, LpSpatialMapping, Partition4D,
                     build_graph, evaluate_lms, parse_lms)
from chipmap.evaluator import heatmap_text

graph = build_graph({"batch": 4, "layers": [
    {"name": "conv1", "kind": "Conv", "ofmap": [8, 8, 16], "kernel": [3, 3, 8]},
    {"name": "conv2", "kind": "Conv", "ofmap": [8, 8, 16], "kernel": [3, 3, 16],
     "predecessors": ["conv1"]}]})
cfg = ArchConfig(3, 2, dram_count=2)

lms = LpSpatialMapping((0, 1), (
    LayerMapping(Partition4D(1, 1, 2, 2), (2, 1, 5, 4), (1, 1, -1)),
    LayerMapping(Partition4D(1, 1, 1, 2), (0, 3), (-1, 2, 2))), batch_unit=2)

pieces, deps = parse_lms(lms, graph, cfg)
print("workload pieces")
for pw in pieces:
    print(f"  {graph[pw.layer].name} part {pw.index} -> core {pw.core}")

print("\ncommunication")
for d in deps:
    dsts = ", ".join(map(str, d.dsts))
    print(f"  {d.tensor:7s} {d.bytes:8.0f} B  {d.src} -> {dsts}")

rep = evaluate_lms(lms, graph, cfg, EnergyTable())
print(f"\ndelay {rep.delay_s * 1e6:.2f} us, energy {rep.energy_j * 1e6:.3f} uJ, "
      f"bound by {rep.bottleneck}")
for part, joules in rep.energy.items():
    print(f"  {part:6s} {joules * 1e9:10.2f} nJ")

print("\nper-link bytes in one pipeline stage")
print(heatmap_text(rep.stage_traffic, cfg))
