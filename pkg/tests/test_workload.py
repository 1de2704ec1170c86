import json

import pytest

from chipmap import zoo
from chipmap.workload import (LayerKind, ModelError, build_graph, depth_of, dump_model,
                              edge_volume, layer_flops, parse_model)


def conv(name, ofmap, kernel, preds=(), **kw):
    d = {"name": name, "kind": "Conv", "ofmap": list(ofmap), "kernel": list(kernel),
         "predecessors": list(preds)}
    d.update(kw)
    return d


def test_topological_order_is_stable():
    g = build_graph({"layers": [
        conv("b", (8, 8, 4), (3, 3, 4), ["a"]),
        conv("a", (8, 8, 4), (3, 3, 3)),
        conv("c", (8, 8, 4), (3, 3, 4), ["a"]),
    ]})
    assert [l.name for l in g.layers] == ["a", "b", "c"]
    assert g.consumers[0] == (1, 2)
    assert g.inputs == (0,) and g.outputs == (1, 2)


def test_cycle_names_a_layer():
    with pytest.raises(ModelError, match="cycle"):
        build_graph({"layers": [conv("a", (4, 4, 4), (1, 1, 4), ["b"]),
                                conv("b", (4, 4, 4), (1, 1, 4), ["a"])]})


def test_dangling_predecessor():
    with pytest.raises(ModelError, match="layer a: dangling predecessor 'zz'"):
        build_graph({"layers": [conv("a", (4, 4, 4), (1, 1, 4), ["zz"])]})


def test_channel_mismatch_rejected():
    with pytest.raises(ModelError, match="l2"):
        build_graph({"layers": [conv("l1", (8, 8, 16), (3, 3, 3)),
                                conv("l2", (8, 8, 16), (3, 3, 8), ["l1"])]})


def test_concat_channels_sum():
    g = build_graph({"layers": [conv("a", (8, 8, 4), (1, 1, 3)), conv("b", (8, 8, 6), (1, 1, 3)),
                                conv("c", (8, 8, 5), (1, 1, 10), ["a", "b"])]})
    assert g.by_name("c").predecessors == (0, 1)


def test_strided_spatial_check():
    build_graph({"layers": [conv("a", (16, 16, 4), (3, 3, 3)),
                            conv("b", (8, 8, 4), (3, 3, 4), ["a"], stride=2)]})
    with pytest.raises(ModelError):
        build_graph({"layers": [conv("a", (16, 16, 4), (3, 3, 3)),
                                conv("b", (5, 5, 4), (3, 3, 4), ["a"], stride=2)]})


def test_flops_and_volume():
    g = zoo.conv_chain(2, size=4, channels=8, batch=2)
    l1 = g[1]
    assert layer_flops(l1, 1) == 2 * 4 * 4 * 8 * 3 * 3 * 8
    assert layer_flops(l1, 2) == 2 * layer_flops(l1, 1)
    assert edge_volume(g, 0, 1, batch=2) == 4 * 4 * 8 * 2


def test_matmul_needs_two_inputs():
    with pytest.raises(ModelError):
        build_graph({"layers": [conv("a", (8, 1, 4), (1, 1, 3)),
                                {"name": "m", "kind": "Matmul", "ofmap": [8, 1, 8],
                                 "kernel": [1, 1, 4], "predecessors": ["a"]}]})


def test_round_trip():
    g = zoo.transformer()
    g2 = parse_model(dump_model(g))
    assert g2.layers == g.layers and g2.batch == g.batch


def test_kind_aliases():
    assert LayerKind.parse("GEMM") is LayerKind.FC
    with pytest.raises(ModelError):
        LayerKind.parse("Deconv")


def test_depth_and_invalid_json():
    g = zoo.attention_head()
    assert depth_of(g, [0, 1, 2]) == 2
    assert depth_of(g, [0, 1]) == 1
    with pytest.raises(ModelError):
        parse_model("{not json")
    assert json.loads(dump_model(g))["name"] == "attn3"
