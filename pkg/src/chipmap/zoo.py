"""Small parametric model builders used by the demos, tests and `compare`."""
from __future__ import annotations

from .workload import DnnGraph, build_graph


def _fc(name, seq, c, k, preds=(), **kw):
    d = {"name": name, "kind": "FullyConnected", "ofmap": [seq, 1, k], "kernel": [1, 1, c],
         "predecessors": list(preds)}
    d.update(kw)
    return d


def attention_head(seq: int = 128, d_model: int = 256, batch: int = 8, name="attn3") -> DnnGraph:
    """Q and K projections feeding one score matmul: a three-layer block."""
    layers = [
        _fc("q", seq, d_model, d_model, input=[seq, 1, d_model]),
        _fc("k", seq, d_model, d_model, input=[seq, 1, d_model]),
        {"name": "score", "kind": "Matmul", "ofmap": [seq, 1, seq], "kernel": [1, 1, d_model],
         "predecessors": ["q", "k"]},
    ]
    return build_graph({"name": name, "batch": batch, "layers": layers})


def transformer(blocks: int = 1, seq: int = 128, d_model: int = 256, d_ff: int = 1024,
                batch: int = 8, name="transformer") -> DnnGraph:
    layers = [_fc("embed", seq, d_model, d_model, input=[seq, 1, d_model])]
    x = "embed"
    for i in range(blocks):
        p = f"b{i}_"
        layers += [
            _fc(p + "q", seq, d_model, d_model, [x]),
            _fc(p + "k", seq, d_model, d_model, [x]),
            _fc(p + "v", seq, d_model, d_model, [x]),
            {"name": p + "score", "kind": "Matmul", "ofmap": [seq, 1, seq],
             "kernel": [1, 1, d_model], "predecessors": [p + "q", p + "k"]},
            {"name": p + "softmax", "kind": "Activation", "ofmap": [seq, 1, seq],
             "predecessors": [p + "score"]},
            {"name": p + "ctx", "kind": "Matmul", "ofmap": [seq, 1, d_model],
             "kernel": [1, 1, seq], "predecessors": [p + "softmax", p + "v"], "b_layout": "nn"},
            _fc(p + "proj", seq, d_model, d_model, [p + "ctx"]),
            {"name": p + "add1", "kind": "EltwiseAdd", "ofmap": [seq, 1, d_model],
             "predecessors": [p + "proj", x]},
            _fc(p + "ffn1", seq, d_model, d_ff, [p + "add1"]),
            {"name": p + "gelu", "kind": "Activation", "ofmap": [seq, 1, d_ff],
             "predecessors": [p + "ffn1"]},
            _fc(p + "ffn2", seq, d_ff, d_model, [p + "gelu"]),
            {"name": p + "add2", "kind": "EltwiseAdd", "ofmap": [seq, 1, d_model],
             "predecessors": [p + "ffn2", p + "add1"]},
        ]
        x = p + "add2"
    return build_graph({"name": name, "batch": batch, "layers": layers})


def resnet_like(blocks: int = 2, size: int = 28, channels: int = 64, batch: int = 8,
                name="resnet") -> DnnGraph:
    """Stem conv followed by basic residual blocks."""
    layers = [{"name": "stem", "kind": "Conv", "ofmap": [size, size, channels],
               "kernel": [3, 3, 3], "input": [size, size, 3]}]
    x = "stem"
    for i in range(blocks):
        p = f"r{i}_"
        layers += [
            {"name": p + "a", "kind": "Conv", "ofmap": [size, size, channels],
             "kernel": [3, 3, channels], "predecessors": [x]},
            {"name": p + "b", "kind": "Conv", "ofmap": [size, size, channels],
             "kernel": [3, 3, channels], "predecessors": [p + "a"]},
            {"name": p + "add", "kind": "EltwiseAdd", "ofmap": [size, size, channels],
             "predecessors": [p + "b", x]},
        ]
        x = p + "add"
    layers.append({"name": "pool", "kind": "Pool", "ofmap": [size // 2, size // 2, channels],
                   "kernel": [2, 2, 0], "stride": 2, "predecessors": [x]})
    layers.append({"name": "fc", "kind": "FullyConnected", "ofmap": [1, 1, 10],
                   "kernel": [size // 2, size // 2, channels], "predecessors": ["pool"]})
    return build_graph({"name": name, "batch": batch, "layers": layers})


def conv_chain(n: int = 3, size: int = 16, channels: int = 32, batch: int = 4,
               name="chain") -> DnnGraph:
    layers = []
    for i in range(n):
        d = {"name": f"c{i}", "kind": "Conv", "ofmap": [size, size, channels],
             "kernel": [3, 3, channels if i else 3]}
        if i:
            d["predecessors"] = [f"c{i - 1}"]
        else:
            d["input"] = [size, size, 3]
        layers.append(d)
    return build_graph({"name": name, "batch": batch, "layers": layers})


MODELS = {"attention": attention_head, "transformer": transformer,
          "resnet": resnet_like, "chain": conv_chain}
