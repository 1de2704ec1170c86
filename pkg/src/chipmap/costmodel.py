"""Monetary cost of an architecture: yield-adjusted silicon, DRAM dies, substrate."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, fields

from .arch import GB, MB, ArchConfig, Topology


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class PackageTier:
    lo_mm2: float
    hi_mm2: float
    usd_per_mm2: float


@dataclass(frozen=True)
class AreaTable:
    core_mm2_per_kmac: float = 2.0        # per 1024 MACs incl. vector unit and router
    glb_mm2_per_mb: float = 1.8
    d2d_mm2_per_interface: float = 1.0
    dram_phy_mm2: float = 5.0             # per controller
    io_misc_mm2: float = 10.0             # per IO die (or per IO side when folded in)


DEFAULT_TIERS = (PackageTier(0.0, 400.0, 0.012),
                 PackageTier(400.0, 1200.0, 0.02),
                 PackageTier(1200.0, 20000.0, 0.035))


@dataclass(frozen=True)
class CostParams:
    c_silicon: float = 0.1                # $/mm2
    yield_unit: float = 0.9
    area_unit_mm2: float = 40.0
    area: AreaTable = field(default_factory=AreaTable)
    f_scale: float = 2.0
    yield_package: float = 0.95
    fanout_usd_per_mm2: float = 0.005
    tiers: tuple[PackageTier, ...] = DEFAULT_TIERS
    unit_bw_dram: float = 32 * GB
    c_dram_die: float = 3.5

    def __post_init__(self):
        if not 0 < self.yield_unit <= 1 or not 0 < self.yield_package <= 1:
            raise CostError("yields must lie in (0, 1]")
        if self.area_unit_mm2 <= 0 or self.unit_bw_dram <= 0:
            raise CostError("area_unit_mm2 and unit_bw_dram must be positive")
        if not self.tiers:
            raise CostError("need at least one packaging tier")
        prev = self.tiers[0].lo_mm2
        for t in self.tiers:
            if t.lo_mm2 != prev or t.hi_mm2 <= t.lo_mm2:
                raise CostError("packaging tiers must be contiguous and non-overlapping")
            prev = t.hi_mm2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tiers"] = [[t.lo_mm2, t.hi_mm2, t.usd_per_mm2] for t in self.tiers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CostParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise CostError(f"unknown cost keys: {sorted(unknown)}")
        d = dict(d)
        if "area" in d:
            d["area"] = AreaTable(**d["area"])
        if "tiers" in d:
            d["tiers"] = tuple(PackageTier(*map(float, t)) for t in d["tiers"])
        return cls(**d)

    def replace(self, **kw) -> "CostParams":
        d = self.to_dict()
        d.update(kw)
        return CostParams.from_dict(d)


PROFILES = {"defaults-12nm": CostParams()}


def load_cost_params(ref: str | None) -> CostParams:
    """A built-in profile name or a JSON file path."""
    if ref is None:
        return PROFILES["defaults-12nm"]
    if ref in PROFILES:
        return PROFILES[ref]
    with open(ref) as fh:
        return CostParams.from_dict(json.load(fh))


@dataclass
class CostBreakdown:
    die_areas: list           # mm2 per die
    die_costs: list           # $ per die
    silicon: float
    dram: float
    packaging: float

    @property
    def total(self) -> float:
        return self.silicon + self.dram + self.packaging

    @property
    def total_area(self) -> float:
        return float(sum(self.die_areas))


def die_yield(area_mm2: float, params: CostParams) -> float:
    if area_mm2 <= 0:
        raise CostError("die area must be positive")
    return params.yield_unit ** (area_mm2 / params.area_unit_mm2)


def die_cost(area_mm2: float, params: CostParams) -> float:
    return area_mm2 / die_yield(area_mm2, params) * params.c_silicon


def silicon_cost(areas, params: CostParams) -> float:
    """Sum over dies; `areas` is a list of mm2 or a {area: count} mapping."""
    items = areas.items() if isinstance(areas, dict) else Counter(areas).items()
    return sum(n * die_cost(a, params) for a, n in items)


def dram_cost(dram_bw_total: float, params: CostParams) -> float:
    if dram_bw_total < 0:
        raise CostError("DRAM bandwidth must be non-negative")
    # guard against 144e9/32e9 landing a hair above an integer
    dies = math.ceil(round(dram_bw_total / params.unit_bw_dram, 9))
    return dies * params.c_dram_die


def package_price(substrate_mm2: float, n_chiplets: int, params: CostParams) -> float:
    if n_chiplets <= 1:
        return params.fanout_usd_per_mm2
    for t in params.tiers:
        if t.lo_mm2 <= substrate_mm2 < t.hi_mm2:
            return t.usd_per_mm2
    raise CostError(f"substrate area {substrate_mm2:.1f} mm2 outside the packaging tier table")


def packaging_cost(total_area_mm2: float, n_chiplets: int, params: CostParams) -> float:
    if total_area_mm2 <= 0:
        raise CostError("total silicon area must be positive")
    substrate = total_area_mm2 * params.f_scale
    return substrate / params.yield_package * package_price(substrate, n_chiplets, params)


def die_areas(cfg: ArchConfig, params: CostParams) -> list[float]:
    """Compute chiplets in row-major chiplet order, then IO dies.

    Each d2d link puts one interface on each of the two chiplets it joins.
    A monolithic design folds the DRAM PHYs and IO logic into its single
    die; otherwise the left and right controller columns are separate IO
    dies.
    """
    a = params.area
    core_mm2 = a.core_mm2_per_kmac * cfg.mac_per_core / 1024 + a.glb_mm2_per_mb * cfg.glb_per_core / MB
    cw, ch = cfg.chiplet_dims
    interfaces: Counter = Counter()
    for (p, q) in Topology(cfg).undirected("d2d"):
        interfaces[cfg.chiplet_of(*p)] += 1
        interfaces[cfg.chiplet_of(*q)] += 1
    chiplets = [(cx, cy) for cy in range(cfg.y_cut) for cx in range(cfg.x_cut)]
    compute = [cw * ch * core_mm2 + interfaces[c] * a.d2d_mm2_per_interface for c in chiplets]
    D = cfg.dram_count
    sides = [math.ceil(D / 2), D // 2]
    io = [n * a.dram_phy_mm2 + a.io_misc_mm2 for n in sides if n]
    if cfg.n_chiplets == 1:
        return [compute[0] + sum(io)]
    return compute + io


def total_cost(cfg: ArchConfig, params: CostParams) -> CostBreakdown:
    areas = die_areas(cfg, params)
    costs = [die_cost(x, params) for x in areas]
    n_dies = len(areas)
    return CostBreakdown(areas, costs, float(sum(costs)), dram_cost(cfg.dram_bw_total, params),
                         packaging_cost(sum(areas), n_dies, params))


def d2d_area_share(cfg: ArchConfig, params: CostParams) -> float:
    """Fraction of compute-chiplet area spent on d2d interfaces."""
    a = params.area
    n_if = 2 * Topology(cfg).n_d2d_links
    compute = sum(die_areas(cfg, params)[:cfg.n_chiplets]) if cfg.n_chiplets > 1 else \
        die_areas(cfg, params)[0]
    return n_if * a.d2d_mm2_per_interface / compute
