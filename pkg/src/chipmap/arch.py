"""Architecture candidates of the chiplet-mesh template and their topology."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Iterator

GB = 1e9
KB = 1024
MB = 1024 * 1024
# One "TOPs" of the template is 1024 G-ops/s: 36 cores x 1024 MACs x 2 x 1 GHz = 72 TOPs.
OPS_PER_TOPS = 1024e9

GRID_KEYS = ("x_cut", "y_cut", "dram_bw_per_tops", "noc_bw", "d2d_bw_ratio",
             "glb_per_core", "mac_per_core")


class ArchError(ValueError):
    pass


def default_dram_count(dram_bw_total: float) -> int:
    return 4 if dram_bw_total >= 128 * GB else 2


@dataclass(frozen=True)
class ArchConfig:
    cores_x: int
    cores_y: int
    x_cut: int = 1
    y_cut: int = 1
    noc_bw: float = 32 * GB
    d2d_bw: float = 16 * GB
    dram_bw_total: float = 144 * GB
    dram_count: int = 0           # 0 -> default_dram_count()
    glb_per_core: int = 2 * MB
    mac_per_core: int = 1024
    freq_hz: float = 1e9
    topology: str = "mesh"
    glb_bw_per_cycle: int = 256   # bytes/cycle between GLB and PE array

    def __post_init__(self):
        if self.dram_count == 0:
            object.__setattr__(self, "dram_count", default_dram_count(self.dram_bw_total))

    @property
    def n_cores(self) -> int:
        return self.cores_x * self.cores_y

    @property
    def n_chiplets(self) -> int:
        return self.x_cut * self.y_cut

    @property
    def chiplet_dims(self) -> tuple[int, int]:
        return self.cores_x // self.x_cut, self.cores_y // self.y_cut

    @property
    def dram_bw_each(self) -> float:
        return self.dram_bw_total / self.dram_count

    @property
    def tops(self) -> float:
        return self.n_cores * self.mac_per_core * 2 * self.freq_hz / OPS_PER_TOPS

    def problems(self) -> list[str]:
        out = []
        for name in ("cores_x", "cores_y", "x_cut", "y_cut", "dram_count", "mac_per_core"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be positive")
        if out:
            return out
        if self.cores_x % self.x_cut:
            out.append(f"x_cut={self.x_cut} does not divide cores_x={self.cores_x}")
        if self.cores_y % self.y_cut:
            out.append(f"y_cut={self.y_cut} does not divide cores_y={self.cores_y}")
        if self.d2d_bw > self.noc_bw:
            out.append("d2d_bw exceeds noc_bw")
        if min(self.noc_bw, self.d2d_bw, self.dram_bw_total, self.freq_hz) <= 0:
            out.append("bandwidths and frequency must be positive")
        if self.topology not in ("mesh", "folded_torus"):
            out.append(f"unknown topology {self.topology!r}")
        return out

    def validate(self) -> "ArchConfig":
        probs = self.problems()
        if probs:
            raise ArchError("; ".join(probs))
        return self

    def coord(self, core: int) -> tuple[int, int]:
        return core % self.cores_x, core // self.cores_x

    def core_at(self, x: int, y: int) -> int:
        return y * self.cores_x + x

    def chiplet_of(self, x: int, y: int) -> tuple[int, int]:
        cx, cy = self.chiplet_dims
        return x // cx, y // cy

    def key(self) -> tuple:
        """Ordering tuple used for tie breaks and reporting."""
        return (self.n_chiplets, self.n_cores, self.dram_bw_total, self.noc_bw,
                self.d2d_bw, self.glb_per_core, self.mac_per_core, self.x_cut, self.y_cut)

    def describe(self) -> str:
        d2d = "None" if self.n_chiplets == 1 else f"{_fmt(self.d2d_bw / GB)}GB/s"
        return (f"({self.n_chiplets}, {self.n_cores}, {_fmt(self.dram_bw_total / GB)}GB/s, "
                f"{_fmt(self.noc_bw / GB)}GB/s, {d2d}, {_fmt_bytes(self.glb_per_core)}, "
                f"{self.mac_per_core})")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:g}"


def _fmt_bytes(b: int) -> str:
    if b % MB == 0:
        return f"{b // MB}MB"
    return f"{b // KB}KB"


# --- topology -------------------------------------------------------------

Node = tuple[int, int]
Link = tuple[Node, Node]


def dram_ports(cfg: ArchConfig) -> dict[int, list[Node]]:
    """Router positions each DRAM controller attaches to (ids 1..D).

    Controllers sit on IO columns left (x=-1) and right (x=cores_x) of the
    mesh; left gets the first ceil(D/2) controllers.  Each controller owns a
    contiguous band of rows on its side.
    """
    d = cfg.dram_count
    left = (d + 1) // 2
    sides = [(-1, list(range(1, left + 1))), (cfg.cores_x, list(range(left + 1, d + 1)))]
    ports: dict[int, list[Node]] = {}
    rows = cfg.cores_y
    for x, ids in sides:
        n = len(ids)
        for j, dram in enumerate(ids):
            if n <= rows:
                band = range(j * rows // n, (j + 1) * rows // n)
            else:
                band = range(j % rows, j % rows + 1)
            ports[dram] = [(x, y) for y in band]
    return ports


class Topology:
    """Directed channel set of one architecture with link kinds and routing.

    Kinds: ``noc`` (on-chip), ``d2d`` (crosses a chiplet boundary) and ``io``
    (router to DRAM-controller port).  Every physical link is two channels.
    """

    def __init__(self, cfg: ArchConfig):
        self.cfg = cfg
        self.routing = cfg.topology
        self.kind: dict[Link, str] = {}
        X, Y = cfg.cores_x, cfg.cores_y
        for y in range(Y):
            for x in range(X):
                if x + 1 < X:
                    self._add((x, y), (x + 1, y))
                if y + 1 < Y:
                    self._add((x, y), (x, y + 1))
        if self.routing == "folded_torus":
            if X > 2:
                for y in range(Y):
                    self._add((X - 1, y), (0, y))
            if Y > 2:
                for x in range(X):
                    self._add((x, Y - 1), (x, 0))
        self.ports = dram_ports(cfg)
        for nodes in self.ports.values():
            for (px, py) in nodes:
                edge = (0, py) if px < 0 else (X - 1, py)
                if (edge, (px, py)) not in self.kind:
                    self.kind[(edge, (px, py))] = "io"
                    self.kind[((px, py), edge)] = "io"
        self._routes: dict[tuple[Node, Node], tuple[Link, ...]] = {}
        self._near: dict = {}
        self.dep_links: dict = {}        # memo for evaluator.dependency_links

    def _add(self, a: Node, b: Node):
        k = "d2d" if self.cfg.chiplet_of(*a) != self.cfg.chiplet_of(*b) else "noc"
        self.kind[(a, b)] = k
        self.kind[(b, a)] = k

    def bandwidth(self, link: Link) -> float:
        return self.cfg.d2d_bw if self.kind[link] == "d2d" else self.cfg.noc_bw

    def undirected(self, kind: str | None = None) -> list[Link]:
        out = [l for l, k in self.kind.items() if l[0] < l[1] and (kind is None or k == kind)]
        return sorted(out)

    @property
    def n_d2d_links(self) -> int:
        return len(self.undirected("d2d"))

    def is_port(self, n: Node) -> bool:
        return n[0] < 0 or n[0] >= self.cfg.cores_x

    def _edge_core(self, port: Node) -> Node:
        return (0, port[1]) if port[0] < 0 else (self.cfg.cores_x - 1, port[1])

    def _axis_steps(self, a: int, b: int, n: int) -> list[int]:
        if a == b:
            return []
        if self.routing == "folded_torus" and n > 2:
            fwd = (b - a) % n
            step = 1 if fwd <= n - fwd else -1
        else:
            step = 1 if b > a else -1
        seq, cur = [], a
        while cur != b:
            cur = (cur + step) % n if self.routing == "folded_torus" and n > 2 else cur + step
            seq.append(cur)
        return seq

    def _core_route(self, s: Node, d: Node) -> list[Link]:
        links, cur = [], s
        for x in self._axis_steps(s[0], d[0], self.cfg.cores_x):
            nxt = (x, cur[1])
            links.append((cur, nxt))
            cur = nxt
        for y in self._axis_steps(s[1], d[1], self.cfg.cores_y):
            nxt = (cur[0], y)
            links.append((cur, nxt))
            cur = nxt
        return links

    def route(self, src: Node, dst: Node) -> tuple[Link, ...]:
        """Dimension-ordered path (X then Y) as a tuple of directed links."""
        key = (src, dst)
        hit = self._routes.get(key)
        if hit is not None:
            return hit
        if src == dst:
            path: list[Link] = []
        else:
            path = []
            s, d = src, dst
            if self.is_port(s):
                e = self._edge_core(s)
                path.append((s, e))
                s = e
            tail = []
            if self.is_port(d):
                e = self._edge_core(d)
                tail.append((e, d))
                d = e
            path += self._core_route(s, d) + tail
            for l in path:
                if l not in self.kind:
                    raise ArchError(f"unreachable: link {l} missing on route {src}->{dst}")
        out = tuple(path)
        self._routes[key] = out
        return out

    def hops(self, src: Node, dst: Node) -> int:
        return len(self.route(src, dst))

    def nearest_port(self, dram_id: int, node: Node) -> Node:
        """Port of `dram_id` with the fewest hops to `node`; lowest index wins ties."""
        key = (dram_id, node)
        hit = self._near.get(key)
        if hit is None:
            ports = self.ports.get(dram_id)
            if not ports:
                raise ArchError(f"DRAM {dram_id} does not exist (D={self.cfg.dram_count})")
            hit = min(ports, key=lambda p: (self.hops(p, node), p[1], p[0]))
            self._near[key] = hit
        return hit


def link_classification(cfg: ArchConfig) -> Topology:
    return Topology(cfg.validate())


# --- candidate enumeration --------------------------------------------------

def near_square(n: int) -> tuple[int, int]:
    """(x, y) with x*y == n, x >= y, as close to square as possible."""
    best = (n, 1)
    for y in range(1, int(math.isqrt(n)) + 1):
        if n % y == 0:
            best = (n // y, y)
    return best


def cores_for(tops_target: float, mac_per_core: int, freq_hz: float = 1e9) -> int | None:
    n = tops_target * OPS_PER_TOPS / (2 * mac_per_core * freq_hz)
    r = round(n)
    return r if r >= 1 and abs(n - r) < 1e-9 * max(1.0, n) else None


@dataclass
class GridPoint:
    params: dict
    cfg: ArchConfig | None
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.cfg is not None


@dataclass
class ArchGrid:
    """Candidate values per parameter, in the units of the grid file."""
    x_cut: list[int]
    y_cut: list[int]
    dram_bw_per_tops: list[float]       # GB/s per TOPs
    noc_bw: list[float]                 # GB/s
    d2d_bw_ratio: list[float]
    glb_per_core: list[int]             # KB
    mac_per_core: list[int]
    tops: float = 72
    freq_hz: float = 1e9
    dram_count: int = 0
    topology: str = "mesh"

    @classmethod
    def from_dict(cls, d: dict) -> "ArchGrid":
        missing = [k for k in GRID_KEYS if k not in d]
        if missing:
            raise ArchError(f"grid config missing keys: {missing}")
        kw = {k: list(d[k]) if isinstance(d[k], (list, tuple)) else [d[k]] for k in GRID_KEYS}
        for k in ("tops", "freq_hz", "dram_count", "topology"):
            if k in d:
                kw[k] = d[k]
        return cls(**kw)


def enumerate_grid(grid: ArchGrid | dict, tops_target: float | None = None) -> Iterator[GridPoint]:
    """Every grid point, valid or not, in deterministic order."""
    if isinstance(grid, dict):
        grid = ArchGrid.from_dict(grid)
    tops = grid.tops if tops_target is None else tops_target
    lists = [getattr(grid, k) for k in GRID_KEYS]
    if any(len(v) == 0 for v in lists):
        raise ArchError("every grid parameter needs at least one candidate value")
    if all(cores_for(tops, m, grid.freq_hz) is None for m in grid.mac_per_core):
        raise ArchError(f"no mac_per_core candidate reaches {tops} TOPs")
    seen: set = set()
    for combo in itertools.product(*lists):
        params = dict(zip(GRID_KEYS, combo))
        xc, yc, dpt, noc, ratio, glb_kb, mac = combo
        n = cores_for(tops, mac, grid.freq_hz)
        if n is None:
            yield GridPoint(params, None, f"mac_per_core={mac} cannot reach {tops} TOPs")
            continue
        cx, cy = near_square(n)
        if xc * yc == 1:
            ratio = 1.0                     # monolithic: D2D bandwidth is irrelevant
        cfg = ArchConfig(cores_x=cx, cores_y=cy, x_cut=xc, y_cut=yc,
                         noc_bw=noc * GB, d2d_bw=noc * ratio * GB,
                         dram_bw_total=dpt * tops * GB, dram_count=grid.dram_count,
                         glb_per_core=int(glb_kb * KB), mac_per_core=mac,
                         freq_hz=grid.freq_hz, topology=grid.topology)
        probs = cfg.problems()
        if probs:
            yield GridPoint(params, None, "; ".join(probs))
            continue
        if cfg in seen:
            continue
        seen.add(cfg)
        yield GridPoint(params, cfg)


def enumerate_candidates(grid: ArchGrid | dict, tops_target: float | None = None) -> list[ArchConfig]:
    return [p.cfg for p in enumerate_grid(grid, tops_target) if p.valid]


def with_cuts(cfg: ArchConfig, x_cut: int, y_cut: int) -> ArchConfig:
    return replace(cfg, x_cut=x_cut, y_cut=y_cut).validate()
