"""Unit energies shared by the intra-core and global evaluators."""
from __future__ import annotations

import json
from dataclasses import dataclass, fields

CLOCK_FORWARDING = "clock_forwarding"
CLOCK_EMBEDDED = "clock_embedded"


@dataclass(frozen=True)
class EnergyTable:
    mac_pj: float = 0.5
    vector_pj: float = 0.2               # per vector-unit op
    glb_pj_per_byte: float = 1.0
    dram_pj_per_byte: float = 40.0
    noc_pj_per_bit_per_hop: float = 0.06
    flit_bytes: int = 16
    d2d_model: str = CLOCK_FORWARDING
    d2d_pj_per_bit: float = 0.8          # clock-forwarding links
    d2d_power_w: float = 0.05            # clock-embedded links, per link

    def __post_init__(self):
        if self.flit_bytes <= 0:
            raise ValueError("flit_bytes must be positive")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and v < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if self.d2d_model not in (CLOCK_FORWARDING, CLOCK_EMBEDDED):
            raise ValueError(f"unknown d2d model {self.d2d_model!r}")

    @property
    def noc_pj_per_flit_per_hop(self) -> float:
        return self.noc_pj_per_bit_per_hop * 8 * self.flit_bytes

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyTable":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown energy keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "EnergyTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
