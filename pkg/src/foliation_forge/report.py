"""Result records shared by every check, plus JSON/CSV serialisation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional


class Status(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"
    VACUOUS = "vacuous"


def _clean(value: Any) -> Any:
    """Make a value JSON-safe (numpy scalars, tuples, non-finite floats)."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    if hasattr(value, "item") and callable(value.item):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


@dataclass
class CheckResult:
    name: str
    paper_ref: str
    status: Status
    worst_margin: Optional[float] = None
    worst_residual: Optional[float] = None
    witness: Optional[dict] = None
    grid: Optional[dict] = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status is not Status.FAIL

    def to_dict(self) -> dict:
        return _clean(
            {
                "name": self.name,
                "paperRef": self.paper_ref,
                "status": self.status.value,
                "worstMargin": self.worst_margin,
                "worstResidual": self.worst_residual,
                "witnessPoint": self.witness,
                "gridUsed": self.grid,
                "details": self.details,
            }
        )

    def summary_line(self) -> str:
        parts = [f"{self.status.value.upper():8s} {self.name}"]
        if self.worst_margin is not None:
            parts.append(f"margin={self.worst_margin:.6g}")
        if self.worst_residual is not None:
            parts.append(f"residual={self.worst_residual:.3g}")
        return "  ".join(parts)
