"""Shared result record for all numeric checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

PASS = "pass-numeric"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass
class CheckReport:
    """Outcome of one sampled condition check.

    ``margin`` is the worst (smallest) value of the checked quantity over all
    samples; sign conventions are such that positive means satisfied.  A
    "pass-numeric" verdict asserts only that the sampled condition held at
    the recorded tolerance; it is not a formal proof.
    """

    check_id: str
    verdict: str
    margin: Optional[float] = None
    witness: Optional[tuple] = None
    witness_velocity: Optional[tuple] = None
    samples: int = 0
    tolerances: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    trend: Optional[list] = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict[str, Any]:
        return {
            "check_id": self.check_id,
            "verdict": self.verdict,
            "margin": self.margin,
            "witness": list(self.witness) if self.witness is not None else None,
            "witness_velocity": (
                list(self.witness_velocity) if self.witness_velocity is not None else None
            ),
            "samples": self.samples,
            "tolerances": dict(self.tolerances),
            "flags": dict(self.flags),
            "trend": self.trend,
            "notes": list(self.notes),
        }
