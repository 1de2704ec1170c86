import pytest
from hypothesis import settings

from chipmap.arch import ArchConfig
from chipmap.mapping import LayerMapping, LpSpatialMapping, Partition4D
from chipmap.workload import build_graph

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# (criterion, verdict line) pairs filled by test_acceptance.py
VERDICTS: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(VERDICTS):
        terminalreporter.write_line(line)


def two_conv_graph(batch=2):
    return build_graph({"name": "two_conv", "batch": batch, "layers": [
        {"name": "l1", "kind": "Conv", "ofmap": [8, 8, 16], "kernel": [3, 3, 8]},
        {"name": "l2", "kind": "Conv", "ofmap": [8, 8, 16], "kernel": [3, 3, 16],
         "predecessors": ["l1"]},
    ]})


@pytest.fixture
def two_layer_lms():
    """3x2 mesh, two DRAMs, two-layer group with the example encoding."""
    graph = two_conv_graph()
    cfg = ArchConfig(3, 2, dram_count=2)
    lms = LpSpatialMapping((0, 1), (
        LayerMapping(Partition4D(1, 1, 2, 2), (2, 1, 5, 4), (1, 1, -1)),
        LayerMapping(Partition4D(1, 1, 1, 2), (0, 3), (-1, 2, 2)),
    ), batch_unit=2)
    return graph, cfg, lms
