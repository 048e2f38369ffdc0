"""Shared report types and serialization conventions.

Every verifier in this package returns a report object rather than a bare
boolean, so that the worst observed value and a concrete witness survive
into logs, aggregate verdicts and exported artifacts.  All floating-point
values written to disk use 17 significant digits, which round-trips IEEE
doubles exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (exact double round-trip)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one numerical check.

    ``worst`` is the extremal value the check observed (its meaning is
    check-specific, e.g. the largest Lie derivative found), ``witness``
    the sample that produced it.  ``details`` carries check-specific
    extras such as sample counts or sub-tables.
    """

    name: str
    passed: bool
    worst: float | None = None
    witness: Any = None
    details: Mapping[str, Any] = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = [f"{self.name}: {status}"]
        if self.worst is not None:
            parts.append(f"worst={fmt17(self.worst)}")
        if self.witness is not None and not self.passed:
            parts.append(f"witness={self.witness!r}")
        return "  ".join(parts)

    def __bool__(self) -> bool:
        return self.passed
