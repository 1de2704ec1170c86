"""Split a DNN into contiguous layer groups and pick a batch unit per group."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .arch import ArchConfig, Topology
from .energy import EnergyTable
from .evaluator import evaluate_lms
from .mapping import stripe_initial_mapping
from .workload import DnnGraph, depth_of

CostFn = Callable[[Sequence[int], int], float]


class PartitionError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerGroup:
    layers: tuple[int, ...]
    batch_unit: int
    depth: int
    cost: float = math.nan


def batch_units(batch: int) -> list[int]:
    out, b = [], 1
    while b <= batch:
        out.append(b)
        b *= 2
    return out


def stripe_cost_oracle(graph: DnnGraph, cfg: ArchConfig, energy: EnergyTable | None = None,
                       beta: float = 1.0, gamma: float = 1.0) -> CostFn:
    """E^beta * D^gamma of a segment under its stripe mapping."""
    energy = energy or EnergyTable()
    topo = Topology(cfg)

    def cost(layers: Sequence[int], batch_unit: int) -> float:
        lms = stripe_initial_mapping(layers, graph, cfg, batch_unit)
        return evaluate_lms(lms, graph, cfg, energy, topo=topo).cost(beta, gamma)
    return cost


def dp_partition(graph: DnnGraph, cfg: ArchConfig, cost_fn: CostFn | None = None,
                 max_group: int | None = None) -> list[LayerGroup]:
    """Minimum-total-cost contiguous segmentation of the topological order.

    best[j] = min over i < j and batch units u of best[i] + cost(layers[i:j], u),
    with j - i capped at `max_group` (default: number of cores).
    """
    cost_fn = cost_fn or stripe_cost_oracle(graph, cfg)
    n = len(graph)
    cap = min(max_group or cfg.n_cores, cfg.n_cores)
    units = batch_units(graph.batch)
    best = [0.0] + [math.inf] * n
    choice: list[tuple[int, int, float] | None] = [None] * (n + 1)
    for j in range(1, n + 1):
        for i in range(max(0, j - cap), j):
            seg = tuple(range(i, j))
            for u in units:
                try:
                    c = float(cost_fn(seg, u))
                except Exception as exc:
                    names = [graph[l].name for l in seg]
                    raise PartitionError(f"cost oracle failed on segment {names} "
                                         f"(batch unit {u}): {exc}") from exc
                total = best[i] + c
                if choice[j] is None or total < best[j]:
                    best[j], choice[j] = total, (i, u, c)
    groups = []
    j = n
    while j > 0:
        i, u, c = choice[j]
        seg = tuple(range(i, j))
        groups.append(LayerGroup(seg, u, depth_of(graph, seg), c))
        j = i
    return groups[::-1]


def partition_cost(groups: Sequence[LayerGroup]) -> float:
    return float(sum(g.cost for g in groups))
