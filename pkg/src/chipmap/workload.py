"""DNN model description parsing and per-layer features."""
from __future__ import annotations

import enum
import heapq
import json
from dataclasses import dataclass, field
from typing import Sequence


class ModelError(ValueError):
    """Raised for malformed or inconsistent model descriptions."""


class LayerKind(str, enum.Enum):
    CONV = "Conv"
    FC = "FullyConnected"
    POOL = "Pool"
    ELTWISE = "EltwiseAdd"
    MATMUL = "Matmul"
    ACTIVATION = "Activation"

    @classmethod
    def parse(cls, text: str) -> "LayerKind":
        aliases = {"GEMM": cls.FC, "FC": cls.FC, "Eltwise": cls.ELTWISE, "Add": cls.ELTWISE}
        if text in aliases:
            return aliases[text]
        try:
            return cls(text)
        except ValueError:
            raise ModelError(f"unknown layer kind {text!r}") from None


WEIGHTLESS = {LayerKind.POOL, LayerKind.ELTWISE, LayerKind.ACTIVATION}
VECTOR_KINDS = {LayerKind.POOL, LayerKind.ELTWISE, LayerKind.ACTIVATION}


@dataclass(frozen=True)
class Layer:
    id: int
    name: str
    kind: LayerKind
    ofmap: tuple[int, int, int]          # (H, W, K)
    kernel: tuple[int, int, int] = (0, 0, 0)   # (R, S, C)
    stride: int = 1
    predecessors: tuple[int, ...] = ()
    # Only meaningful for layers fed by the DNN input.
    input_shape: tuple[int, int, int] | None = None
    b_layout: str = "nt"

    @property
    def H(self) -> int:
        return self.ofmap[0]

    @property
    def W(self) -> int:
        return self.ofmap[1]

    @property
    def K(self) -> int:
        return self.ofmap[2]

    @property
    def has_weights(self) -> bool:
        return self.kind in (LayerKind.CONV, LayerKind.FC)

    @property
    def weight_elems(self) -> int:
        if not self.has_weights:
            return 0
        r, s, c = self.kernel
        return r * s * c * self.K

    @property
    def ofmap_elems(self) -> int:
        """Output volume of one sample."""
        h, w, k = self.ofmap
        return h * w * k

    @property
    def is_input(self) -> bool:
        return not self.predecessors


@dataclass(frozen=True)
class DnnGraph:
    layers: tuple[Layer, ...]
    batch: int = 1
    elem_bytes: int = 1
    name: str = "dnn"
    consumers: tuple[tuple[int, ...], ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.consumers:
            cons: list[list[int]] = [[] for _ in self.layers]
            for layer in self.layers:
                for p in layer.predecessors:
                    cons[p].append(layer.id)
            object.__setattr__(self, "consumers", tuple(tuple(c) for c in cons))

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, idx: int) -> Layer:
        return self.layers[idx]

    @property
    def inputs(self) -> tuple[int, ...]:
        return tuple(l.id for l in self.layers if l.is_input)

    @property
    def outputs(self) -> tuple[int, ...]:
        return tuple(l.id for l in self.layers if not self.consumers[l.id])

    def by_name(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def source_shapes(self, layer: Layer) -> list[tuple[int, int, int]]:
        """Shapes (H, W, K) of everything the layer reads as ifmap."""
        if layer.is_input:
            return [layer.input_shape]
        return [self.layers[p].ofmap for p in layer.predecessors]


def _spatial_ok(out: int, inp: int, r: int, stride: int) -> bool:
    same = -(-inp // stride) == out
    valid = inp >= r and (inp - r) // stride + 1 == out
    return same or valid


def _default_input_shape(kind: LayerKind, ofmap, kernel, stride):
    h, w, k = ofmap
    r, s, c = kernel
    if kind in (LayerKind.CONV, LayerKind.FC):
        if h == 1 and w == 1 and (r > 1 or s > 1):
            return (r, s, c)
        return (h * stride, w * stride, c)
    if kind == LayerKind.POOL:
        return (h * stride, w * stride, k)
    return (h, w, k)


def _check_layer(layer: Layer, shapes: list[tuple[int, int, int]], names: list[str]):
    kind = layer.kind
    h, w, k = layer.ofmap
    r, s, c = layer.kernel
    name = layer.name

    def fail(msg):
        raise ModelError(f"layer {name}: {msg}")

    if kind in (LayerKind.CONV, LayerKind.FC, LayerKind.POOL):
        hs = {sh[0] for sh in shapes}
        ws = {sh[1] for sh in shapes}
        if len(hs) != 1 or len(ws) != 1:
            fail(f"predecessors {names} disagree on spatial dims")
        hp, wp = hs.pop(), ws.pop()
        if not (_spatial_ok(h, hp, r, layer.stride) and _spatial_ok(w, wp, s, layer.stride)):
            fail(f"ofmap {h}x{w} inconsistent with ifmap {hp}x{wp}, kernel {r}x{s}, "
                 f"stride {layer.stride}")
        chans = sum(sh[2] for sh in shapes)
        want = k if kind == LayerKind.POOL else c
        if chans != want:
            fail(f"ifmap channels {chans} != expected {want}")
    elif kind in (LayerKind.ELTWISE, LayerKind.ACTIVATION):
        if kind == LayerKind.ACTIVATION and len(shapes) != 1:
            fail("activation takes exactly one input")
        for sh, pn in zip(shapes, names):
            if tuple(sh) != layer.ofmap:
                fail(f"input {pn} shape {tuple(sh)} != ofmap {layer.ofmap}")
    elif kind == LayerKind.MATMUL:
        if layer.is_input or len(shapes) != 2:
            fail("matmul takes exactly two predecessors")
        a, b = shapes
        if tuple(a) != (h, w, c):
            fail(f"operand A {names[0]} shape {tuple(a)} != {(h, w, c)}")
        want_b = (k, 1, c) if layer.b_layout == "nt" else (c, 1, k)
        if tuple(b) != want_b:
            fail(f"operand B {names[1]} shape {tuple(b)} != {want_b} ({layer.b_layout})")


def _as_triple(value, what, name) -> tuple[int, int, int]:
    try:
        t = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ModelError(f"layer {name}: {what} must be three integers") from None
    if len(t) != 3:
        raise ModelError(f"layer {name}: {what} must be three integers")
    return t


def build_graph(spec: dict) -> DnnGraph:
    """Validate a decoded model description and return the layer DAG.

    Layers are reordered into a stable topological order (file order breaks
    ties).  Errors name the offending layer.
    """
    raw = spec.get("layers")
    if not raw:
        raise ModelError("model has no layers")
    batch = int(spec.get("batch", 1))
    if batch < 1:
        raise ModelError("batch must be positive")
    names = [str(l["name"]) for l in raw]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ModelError(f"layer {dup}: duplicate name")
    index = {n: i for i, n in enumerate(names)}
    for l in raw:
        for p in l.get("predecessors", []):
            if p not in index:
                raise ModelError(f"layer {l['name']}: dangling predecessor {p!r}")

    # Kahn's algorithm, smallest file position first.
    indeg = [len(l.get("predecessors", [])) for l in raw]
    succ: list[list[int]] = [[] for _ in raw]
    for i, l in enumerate(raw):
        for p in l.get("predecessors", []):
            succ[index[p]].append(i)
    ready = sorted(i for i, d in enumerate(indeg) if d == 0)
    order = []
    heapq.heapify(ready)
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != len(raw):
        stuck = [names[i] for i in range(len(raw)) if i not in set(order)]
        raise ModelError(f"layer {stuck[0]}: cycle detected among {stuck}")

    new_id = {old: new for new, old in enumerate(order)}
    layers: list[Layer] = []
    for old in order:
        l = raw[old]
        name = names[old]
        kind = LayerKind.parse(l["kind"])
        ofmap = _as_triple(l["ofmap"], "ofmap", name)
        if min(ofmap) < 1:
            raise ModelError(f"layer {name}: ofmap dims must be positive")
        kernel = _as_triple(l.get("kernel", (0, 0, 0)), "kernel", name)
        if min(kernel) < 0:
            raise ModelError(f"layer {name}: kernel dims must be non-negative")
        stride = int(l.get("stride", 1))
        if stride < 1:
            raise ModelError(f"layer {name}: stride must be positive")
        if kind in (LayerKind.CONV, LayerKind.FC, LayerKind.MATMUL) and min(kernel) < 1:
            raise ModelError(f"layer {name}: {kind.value} needs a positive kernel")
        if kind == LayerKind.POOL and min(kernel[:2]) < 1:
            raise ModelError(f"layer {name}: pool needs a positive window")
        preds = tuple(new_id[index[p]] for p in l.get("predecessors", []))
        inp = None
        if not preds:
            inp = l.get("input")
            inp = _as_triple(inp, "input", name) if inp is not None else \
                _default_input_shape(kind, ofmap, kernel, stride)
        layer = Layer(len(layers), name, kind, ofmap, kernel, stride, preds, inp,
                      str(l.get("b_layout", "nt")))
        if kind in WEIGHTLESS and kernel[2] and kind != LayerKind.POOL:
            raise ModelError(f"layer {name}: {kind.value} cannot carry weights")
        shapes = [inp] if not preds else [layers[p].ofmap for p in preds]
        _check_layer(layer, shapes, [layers[p].name for p in preds] or ["<input>"])
        layers.append(layer)
    return DnnGraph(tuple(layers), batch, int(spec.get("elem_bytes", 1)),
                    str(spec.get("name", "dnn")))


def parse_model(text: str) -> DnnGraph:
    """Parse JSON model text into a validated, topologically ordered graph."""
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model is not valid JSON: {exc}") from None
    return build_graph(spec)


def model_to_dict(graph: DnnGraph) -> dict:
    layers = []
    for l in graph.layers:
        d = {"name": l.name, "kind": l.kind.value, "ofmap": list(l.ofmap),
             "kernel": list(l.kernel), "stride": l.stride,
             "predecessors": [graph.layers[p].name for p in l.predecessors]}
        if l.is_input:
            d["input"] = list(l.input_shape)
        if l.kind == LayerKind.MATMUL:
            d["b_layout"] = l.b_layout
        layers.append(d)
    return {"name": graph.name, "batch": graph.batch, "elem_bytes": graph.elem_bytes,
            "layers": layers}


def dump_model(graph: DnnGraph) -> str:
    return json.dumps(model_to_dict(graph), indent=1)


def layer_flops(layer: Layer, batch: int) -> int:
    h, w, k = layer.ofmap
    r, s, c = layer.kernel
    if layer.kind in (LayerKind.CONV, LayerKind.FC):
        return 2 * h * w * k * r * s * c * batch
    if layer.kind == LayerKind.MATMUL:
        return 2 * h * w * k * c * batch
    if layer.kind == LayerKind.POOL:
        return h * w * k * r * s * batch
    return h * w * k * batch


def edge_volume(graph: DnnGraph, u: int, v: int, batch: int = 1) -> int:
    """Bytes of u's ofmap consumed by v for `batch` samples."""
    if u not in graph.layers[v].predecessors:
        raise ValueError(f"no edge {u}->{v}")
    return graph.layers[u].ofmap_elems * batch * graph.elem_bytes


def depth_of(graph: DnnGraph, ids: Sequence[int]) -> int:
    """Longest dependency chain (in layers) inside the subset `ids`."""
    members = set(ids)
    longest: dict[int, int] = {}
    for i in sorted(members):
        preds = [p for p in graph.layers[i].predecessors if p in members]
        longest[i] = 1 + max((longest[p] for p in preds), default=0)
    return max(longest.values(), default=0)
