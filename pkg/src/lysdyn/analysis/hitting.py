"""Return-time sets ``N(U, V) = {n : T^n U meets V}`` with explicit witnesses."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..cells import cell_from_json
from ..core import System, point_to_json


def longest_run(hits) -> int:
    """Length of the longest block of consecutive integers in a sorted sequence."""
    best = run = 0
    prev = None
    for n in hits:
        run = run + 1 if prev is not None and n == prev + 1 else 1
        best = max(best, run)
        prev = n
    return best


@dataclass
class HittingRecord:
    U: Any
    V: Any
    horizon: int
    hits: list[int]
    witnesses: dict[int, Any] = field(default_factory=dict)

    @property
    def longest_run(self) -> int:
        return longest_run(self.hits)

    def to_json(self, with_witnesses: bool = True):
        out = {
            "U": self.U.to_json(),
            "V": self.V.to_json(),
            "horizon": self.horizon,
            "hits": self.hits,
            "longest_run": self.longest_run,
        }
        if with_witnesses:
            out["witnesses"] = {str(n): point_to_json(w) for n, w in self.witnesses.items()}
        return out


def certify(system: System, U, V, n: int, u) -> bool:
    """Recheck ``u in U`` and ``T^n u in V`` from scratch."""
    return U.contains(u) and V.contains(system.iterate(u, n))


def hitting_times(system: System, U, V, horizon: int) -> HittingRecord:
    """All ``n <= horizon`` for which a witness ``u in U`` with ``T^n u in V`` is constructed and certified.

    Raises UndecidableCell when membership cannot be settled at the
    available precision.
    """
    hits, witnesses = [], {}
    for n in range(horizon + 1):
        u = system.hitting_witness(U, V, n)
        if u is None:
            continue
        if not certify(system, U, V, n, u):
            raise AssertionError(f"witness for time {n} failed certification")
        hits.append(n)
        witnesses[n] = u
    return HittingRecord(U, V, horizon, hits, witnesses)


def replay(system: System, record: HittingRecord) -> list[int]:
    """Times whose stored witness no longer certifies; empty means the record replays."""
    return [n for n in record.hits if not certify(system, record.U, record.V, n, record.witnesses[n])]


def cells_from_json(obj) -> tuple:
    return cell_from_json(obj["U"]), cell_from_json(obj["V"])
