"""Chiplet accelerator architecture and layer-pipeline mapping co-exploration."""
from .arch import ArchConfig, ArchGrid, Topology, enumerate_candidates, enumerate_grid
from .costmodel import CostBreakdown, CostParams, total_cost
from .dse import Objective, run_dse, run_joint_dse
from .energy import EnergyTable
from .evaluator import EvalReport, evaluate_dnn, evaluate_group, evaluate_lms, route_traffic
from .mapping import (LayerMapping, LpSpatialMapping, Partition4D, lms_space_size,
                      parse_lms, stripe_initial_mapping, tangram_space_size)
from .partition import LayerGroup, dp_partition
from .sa import anneal
from .workload import DnnGraph, build_graph, parse_model

__all__ = [
    "ArchConfig", "ArchGrid", "Topology", "enumerate_candidates", "enumerate_grid",
    "CostBreakdown", "CostParams", "total_cost", "Objective", "run_dse", "run_joint_dse",
    "EnergyTable", "EvalReport", "evaluate_dnn", "evaluate_group", "evaluate_lms",
    "route_traffic", "LayerMapping", "LpSpatialMapping", "Partition4D", "lms_space_size",
    "parse_lms", "stripe_initial_mapping", "tangram_space_size", "LayerGroup",
    "dp_partition", "anneal", "DnnGraph", "build_graph", "parse_model",
]
