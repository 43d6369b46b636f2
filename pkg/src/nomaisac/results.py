"""Tabular tradeoff-region results shared by the uplink, downlink and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

__all__ = ["STATUSES", "RegionRow", "RegionResult", "pareto_flags"]

STATUSES = ("ok", "infeasible", "solver_failed")


@dataclass
class RegionRow:
    design: str
    sweep_param: float
    sensing_value: float
    comm_value: float
    aux: dict = field(default_factory=dict)
    pareto: bool = False
    status: str = "ok"

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {self.status!r}")

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "sweep_param": self.sweep_param,
            "sensing_value": self.sensing_value,
            "comm_value": self.comm_value,
            "aux": dict(sorted(self.aux.items())),
            "pareto": self.pareto,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionRow":
        return cls(
            design=d["design"],
            sweep_param=d["sweep_param"],
            sensing_value=d["sensing_value"],
            comm_value=d["comm_value"],
            aux=dict(d.get("aux", {})),
            pareto=bool(d["pareto"]),
            status=d["status"],
        )


def pareto_flags(points, tol=0.0) -> list:
    """Flag points not dominated by any other; both coordinates maximized.

    ``points`` holds ``(sensing, comm)`` pairs or ``None`` for failed
    entries, which are never Pareto-optimal.
    """
    flags = []
    for i, p in enumerate(points):
        if p is None:
            flags.append(False)
            continue
        dominated = False
        for j, q in enumerate(points):
            if j == i or q is None:
                continue
            if (q[0] >= p[0] - tol and q[1] >= p[1] - tol
                    and (q[0] > p[0] + tol or q[1] > p[1] + tol)):
                dominated = True
                break
        flags.append(not dominated)
    return flags


@dataclass
class RegionResult:
    """Swept tradeoff curve(s): one row per (design, sweep parameter).

    ``points`` optionally keeps the rich per-row objects (uplink or downlink
    points, ``None`` for failed rows) aligned with ``rows``.
    """

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    points: Optional[list] = None

    def mark_pareto(self, tol=0.0) -> "RegionResult":
        """Recompute the Pareto flag of every row, separately per design."""
        by_design: dict[str, list[int]] = {}
        for i, row in enumerate(self.rows):
            by_design.setdefault(row.design, []).append(i)
        for idx in by_design.values():
            pts = [
                (self.rows[i].sensing_value, self.rows[i].comm_value)
                if self.rows[i].status == "ok" else None
                for i in idx
            ]
            for i, flag in zip(idx, pareto_flags(pts, tol)):
                self.rows[i].pareto = flag
        return self

    def sort(self) -> "RegionResult":
        order = sorted(range(len(self.rows)),
                       key=lambda i: (self.rows[i].design, self.rows[i].sweep_param))
        self.rows = [self.rows[i] for i in order]
        if self.points is not None:
            self.points = [self.points[i] for i in order]
        return self

    def extend(self, other: "RegionResult") -> "RegionResult":
        self.rows.extend(other.rows)
        if self.points is not None and other.points is not None:
            self.points.extend(other.points)
        else:
            self.points = None
        return self

    def for_design(self, design: str) -> list:
        return [r for r in self.rows if r.design == design]

    @property
    def failed(self) -> bool:
        return any(r.status != "ok" for r in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [r.to_dict() for r in self.rows], "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionResult":
        return cls(rows=[RegionRow.from_dict(r) for r in d["rows"]],
                   metadata=dict(d.get("metadata", {})))
