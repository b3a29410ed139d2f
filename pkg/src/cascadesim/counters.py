from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class OpCounters:
    """Exact scalar operation counts."""

    mul: int = 0
    add: int = 0
    div: int = 0
    exp: int = 0
    max: int = 0

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def scaled(self, k: int) -> "OpCounters":
        return OpCounters(*(getattr(self, f.name) * k for f in fields(self)))

    def as_dict(self) -> dict[str, int]:
        return asdict(self)

    @property
    def total(self) -> int:
        return sum(self.as_dict().values())


COUNTER_NAMES = tuple(f.name for f in fields(OpCounters))
