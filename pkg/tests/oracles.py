"""Slow, independently coded reference computations used by the tests."""
import itertools
import random

from chipmap.mapping import LayerMapping, Partition4D, box_volume
from chipmap.workload import build_graph


def binom_table(n):
    rows = [[1]]
    for i in range(1, n + 1):
        prev = rows[-1]
        rows.append([1] + [prev[j - 1] + prev[j] for j in range(1, i)] + [1])
    return rows


def binom(rows, n, k):
    if n < 0 or k < 0 or k > n:
        return 0
    return rows[n][k]


def space_size_terms(n, m, rows=None):
    """Term-by-term lower bound: M! times the sum over i of C(N,i) C(M-N-1,N-i-1) 4^(N-i)."""
    rows = rows or binom_table(m)
    fact = 1
    for v in range(2, m + 1):
        fact *= v
    acc = 0
    for i in range(n):
        acc += binom(rows, n, i) * binom(rows, m - n - 1, n - i - 1) * 4 ** (n - i)
    return fact * acc


def count_partitions(m, largest=None):
    """Integer partitions of m by explicit recursion on the largest part."""
    largest = m if largest is None else largest
    if m == 0:
        return 1
    return sum(count_partitions(m - p, p) for p in range(min(m, largest), 0, -1))


def best_segmentation(n, units, cost, cap=None):
    """Exhaustive minimum over every way of cutting 0..n-1 into contiguous runs."""
    cap = cap or n
    best = float("inf")
    for mask in range(1 << (n - 1)):
        cuts = [0] + [i + 1 for i in range(n - 1) if mask >> i & 1] + [n]
        segs = [tuple(range(a, b)) for a, b in zip(cuts, cuts[1:])]
        if any(len(s) > cap for s in segs):
            continue
        total = sum(min(cost(s, u) for u in units) for s in segs)
        best = min(best, total)
    return best


def random_layer_graph(rng: random.Random):
    """Single conv or FC layer with random (small) extents."""
    h, w = rng.randint(1, 9), rng.randint(1, 9)
    k, c = rng.randint(1, 16), rng.randint(1, 6)
    r = rng.choice([1, 3])
    return build_graph({"batch": 8, "layers": [
        {"name": "x", "kind": "Conv", "ofmap": [h, w, k], "kernel": [r, r, c]}]})


def random_part(rng, caps, limit=64):
    while True:
        p = tuple(rng.randint(1, min(c, 4)) for c in caps)
        if p[0] * p[1] * p[2] * p[3] <= limit:
            return Partition4D(*p)


def random_layer_mapping(rng, caps, n_cores=64):
    part = random_part(rng, caps, n_cores)
    cg = tuple(rng.sample(range(n_cores), part.size))
    return LayerMapping(part, cg, (0, 0, 0))


def tiles_exactly(boxes, extents):
    """Point-set check that boxes cover the cube once."""
    seen = set()
    for box in boxes:
        for pt in itertools.product(*(range(lo, hi) for lo, hi in box)):
            if pt in seen:
                return False
            seen.add(pt)
    total = 1
    for e in extents:
        total *= e
    return len(seen) == total and sum(box_volume(b) for b in boxes) == total


def random_dag(rng: random.Random, n: int, size=4, channels=8, batch=4):
    """Random layer DAG in topological order: FC for one input, Eltwise for several."""
    layers = [{"name": "l0", "kind": "FC", "ofmap": [size, 1, channels],
               "kernel": [1, 1, channels]}]
    for i in range(1, n):
        k = rng.choice([1, 1, 2]) if i > 1 else 1
        preds = sorted(rng.sample(range(i), k))
        d = {"name": f"l{i}", "predecessors": [f"l{p}" for p in preds],
             "ofmap": [size, 1, channels]}
        if k == 1:
            d.update(kind="FC", kernel=[1, 1, channels])
        else:
            d.update(kind="Eltwise")
        layers.append(d)
    return build_graph({"name": "dag", "batch": batch, "layers": layers})
