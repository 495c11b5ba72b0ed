from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import ImplausibleDepth

RULE_ENGINE = "rule-engine"

# Depths outside this band are rejected outright; above the soft limit they are flagged.
MIN_DEPTH_M = 0.0
MAX_DEPTH_M = 10.0
LOW_PLAUSIBILITY_ABOVE_M = 5.0


class Flag(str, enum.Enum):
    RANGE_COLLAPSED = "RangeCollapsed"
    UNIT_CONVERTED = "UnitConverted"
    MULTIPLE_CANDIDATES = "MultipleCandidates"
    LOW_PLAUSIBILITY = "LowPlausibility"


@dataclass(frozen=True)
class DepthEstimate:
    """A floodwater depth in meters with the text that justifies it.

    ``source`` is either ``"rule-engine"`` or the id of the model that wrote
    the rationale.
    """

    value_m: float
    rationale: str
    source: str
    flags: frozenset[Flag] = field(default_factory=frozenset)

    def __post_init__(self):
        if not MIN_DEPTH_M <= self.value_m <= MAX_DEPTH_M:
            raise ImplausibleDepth(
                f"depth {self.value_m} m outside plausible band "
                f"[{MIN_DEPTH_M}, {MAX_DEPTH_M}] m"
            )
        object.__setattr__(self, "flags", frozenset(Flag(f) for f in self.flags))

    def to_dict(self) -> dict:
        return {
            "value_m": self.value_m,
            "rationale": self.rationale,
            "source": self.source,
            "flags": sorted(f.value for f in self.flags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> DepthEstimate:
        return cls(
            value_m=float(data["value_m"]),
            rationale=data["rationale"],
            source=data["source"],
            flags=frozenset(Flag(f) for f in data.get("flags", ())),
        )
