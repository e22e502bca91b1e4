"""Operation counters used for the cycle-model accounting."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class OpCounter:
    """Tally of arithmetic primitives issued by the kernels.

    Counters only ever increase during forward passes; per-worker counters
    are merged by summation.
    """

    multiplies: int = 0
    shifts: int = 0
    adds: int = 0

    def add(self, other: "OpCounter") -> None:
        self.multiplies += other.multiplies
        self.shifts += other.shifts
        self.adds += other.adds

    def copy(self) -> "OpCounter":
        return OpCounter(self.multiplies, self.shifts, self.adds)
