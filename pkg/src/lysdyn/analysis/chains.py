"""Characteristic sequences of cocycle elements along close pair orbits.

For a base pair ``(x, y)`` and a finite cocycle, ``c_i = (g_i(x), g_i(y))``
is recorded at every time ``i`` where the base orbits are ``eta``-close.
The value set of that sequence, its saturation time, joins of two chains
and the cardinality and identity checks on value sets live here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..core import DepthExhausted, DynamicsError, FiberedPoint, SymbolicWord, System, point_to_json
from ..skew import CocycleElement, SkewProduct, cocycle_compose, cocycle_sequence
from ..systems import keep_for_radius


def _base_point(p):
    return p.base if isinstance(p, FiberedPoint) else p


@dataclass
class ChainRecord:
    eta: float
    horizon: int
    indices: list[int]
    elements: list[CocycleElement]
    x: Any = None
    y: Any = None
    first_seen: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.first_seen:
            for i, e in zip(self.indices, self.elements):
                self.first_seen.setdefault(e, i)

    @property
    def c_set(self) -> frozenset:
        return frozenset(self.first_seen)

    @property
    def cardinality(self) -> int:
        return len(self.first_seen)

    @property
    def saturation_index(self) -> int | None:
        """Time at which the last new element value appeared (None for an empty chain)."""
        return max(self.first_seen.values()) if self.first_seen else None

    def stabilized(self, fraction: float = 0.1) -> bool:
        """True when no new value appeared after the first ``fraction`` of the window."""
        s = self.saturation_index
        return s is not None and s <= fraction * self.horizon

    def element_at(self, index: int) -> CocycleElement:
        pos = int(np.searchsorted(self.indices, index))
        if pos == len(self.indices) or self.indices[pos] != index:
            raise KeyError(index)
        return self.elements[pos]

    def to_json(self, full: bool = False) -> dict[str, Any]:
        out = {
            "eta": self.eta,
            "horizon": self.horizon,
            "count": len(self.indices),
            "cardinality": self.cardinality,
            "saturation_index": self.saturation_index,
            "c_set": sorted((e.to_json() for e in self.c_set)),
            "first_seen": sorted(([e.to_json(), i] for e, i in self.first_seen.items()), key=lambda r: r[1]),
        }
        if full:
            out["indices"] = list(self.indices)
            out["elements"] = [e.to_json() for e in self.elements]
        return out


def characteristic_chain(skew: SkewProduct, x, y, eta: float, horizon: int) -> ChainRecord:
    """Every ``i <= horizon`` with ``d(x_i, y_i) < eta`` and the element ``c_i`` there.

    ``x`` and ``y`` are base points (fibered points are projected).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    x, y = _base_point(x), _base_point(y)
    d = skew.base.pair_orbit_distances(x, y, horizon)
    idx = np.flatnonzero(d < eta)
    gx = cocycle_sequence(skew.cocycle, skew.base, x, horizon)
    gy = cocycle_sequence(skew.cocycle, skew.base, y, horizon)
    cache: dict = {}
    elements = []
    for i in idx.tolist():
        key = (gx[i], gy[i])
        e = cache.get(key)
        if e is None:
            e = cache[key] = CocycleElement(*key)
        elements.append(e)
    return ChainRecord(eta, horizon, idx.tolist(), elements, x, y)


def recheck_indices(base: System, record: ChainRecord, limit: int | None = None) -> list[int]:
    """Recorded indices whose closeness fails when recomputed step by step.

    Uses ``iterate`` and ``distance`` only, independent of the vectorized
    trace that produced the record.
    """
    bad = []
    indices = record.indices if limit is None else record.indices[:limit]
    for i in indices:
        if not base.distance(base.iterate(record.x, i), base.iterate(record.y, i)) < record.eta:
            bad.append(i)
    return bad


class JoinNotFound(DynamicsError):
    """No tracing time was found within the horizon."""


@dataclass
class JoinResult:
    time: int
    connecting: CocycleElement
    joined: ChainRecord
    translated: frozenset
    contained: bool
    missing: frozenset

    def to_json(self):
        return {
            "time": self.time,
            "connecting": self.connecting.to_json(),
            "contained": self.contained,
            "translated": sorted(e.to_json() for e in self.translated),
            "missing": sorted(e.to_json() for e in self.missing),
            "joined_cardinality": self.joined.cardinality,
        }


def _tracing_times_words(x: SymbolicWord, y: SymbolicWord, xp: SymbolicWord, yp: SymbolicWord,
                         length: int, start: int, stop: int):
    px, py = xp.prefix(length), yp.prefix(length)
    hx, hy = x.digits, y.digits
    n = hx.find(px, start)
    while 0 <= n <= stop:
        if hy[n:n + length] == py:
            yield n
        n = hx.find(px, n + 1)


def find_tracing_time(base: System, x, y, xp, yp, eta_prime: float, start: int, stop: int,
                      window: int = 0) -> int | None:
    """Smallest ``n`` in ``[start, stop]`` with ``(x_{n+i}, y_{n+i})`` within ``eta_prime`` of ``(x'_i, y'_i)``, ``i <= window``."""
    if all(isinstance(p, SymbolicWord) for p in (x, y, xp, yp)):
        length = keep_for_radius(eta_prime) + window
        if min(xp.depth, yp.depth) < length:
            raise DepthExhausted(f"tracing needs {length} symbols of the target pair")
        stop = min(stop, x.depth - length, y.depth - length)
        return next(_tracing_times_words(x, y, xp, yp, length, start, stop), None)
    xs, ys = base.iterate(x, start), base.iterate(y, start)
    for n in range(start, stop + 1):
        dx = base.pair_orbit_distances(xs, xp, window)
        dy = base.pair_orbit_distances(ys, yp, window)
        if dx.max() < eta_prime and dy.max() < eta_prime:
            return n
        xs, ys = base.step(xs), base.step(ys)
    return None


def chain_join(skew: SkewProduct, rec1: ChainRecord, rec2: ChainRecord, horizon: int | None = None,
               start: int | None = None, window: int = 0) -> JoinResult:
    """Continue the chain of ``(x, y)`` with the chain of ``(x', y')`` at a tracing time.

    The tracing time ``n`` is searched from ``start`` (default: the
    saturation index of ``rec1``) up to ``horizon``. The connecting element
    is ``c_n(x, y)``, and the containment of ``C(x', y', eta') o c_n`` in
    ``C(x, y, eta)`` is checked on the computed sets.
    """
    if rec2.eta > rec1.eta:
        raise ValueError("the joined chain needs eta' <= eta")
    horizon = rec1.horizon if horizon is None else horizon
    if start is None:
        start = rec1.saturation_index or 0
    n = find_tracing_time(skew.base, rec1.x, rec1.y, rec2.x, rec2.y, rec2.eta, start, horizon, window)
    if n is None:
        raise JoinNotFound(f"no time in [{start}, {horizon}] traces the second pair to {rec2.eta}")
    connecting = CocycleElement(
        cocycle_compose(skew.cocycle, skew.base, rec1.x, n),
        cocycle_compose(skew.cocycle, skew.base, rec1.y, n),
    )
    translated = frozenset(e @ connecting for e in rec2.c_set)
    missing = translated - rec1.c_set

    cut = int(np.searchsorted(rec1.indices, n))
    indices = list(rec1.indices[:cut])
    elements = list(rec1.elements[:cut])
    last = rec2.saturation_index
    if last is not None:
        for j, e in zip(rec2.indices, rec2.elements):
            if j > last:
                break
            indices.append(n + j)
            elements.append(e @ connecting)
    joined = ChainRecord(rec1.eta, rec1.horizon, indices, elements, rec1.x, rec1.y)
    return JoinResult(n, connecting, joined, translated, not missing, frozenset(missing))


@dataclass
class Claim3Result:
    holds: bool
    witness: CocycleElement | None
    connecting: CocycleElement
    time: int
    eta: float
    eta_prime: float
    horizon: int

    def to_json(self):
        return {
            "holds": self.holds,
            "witness": None if self.witness is None else self.witness.to_json(),
            "connecting": self.connecting.to_json(),
            "time": self.time,
            "eta": self.eta,
            "eta_prime": self.eta_prime,
            "horizon": self.horizon,
        }


def claim3_test(skew: SkewProduct, x, y, eta: float, eta_prime: float, horizon: int,
                start: int | None = None) -> Claim3Result:
    """Check that the identity lies in ``C(x, y, eta') o c_n`` for the connecting element ``c_n``.

    The witness is the element ``e`` of ``C(x, y, eta')`` with
    ``e o c_n = (Id, Id)``; raises JoinNotFound when no tracing time exists.
    """
    if not eta_prime < eta:
        raise ValueError("need eta' < eta")
    rec1 = characteristic_chain(skew, x, y, eta, horizon)
    rec2 = characteristic_chain(skew, x, y, eta_prime, horizon)
    join = chain_join(skew, rec1, rec2, horizon, start=start)
    candidate = join.connecting.inverse()
    found = candidate in rec2.c_set
    witness = candidate if found and (candidate @ join.connecting).is_identity() else None
    return Claim3Result(witness is not None, witness, join.connecting, join.time, eta, eta_prime, horizon)


@dataclass
class Claim2Report:
    rows: list[dict]

    @property
    def stabilized_cardinalities(self) -> set[int]:
        return {r["cardinality"] for r in self.rows if r.get("stabilized")}

    @property
    def consistent(self) -> bool:
        return len(self.stabilized_cardinalities) <= 1

    @property
    def sound(self) -> bool:
        return all(r.get("sound", True) for r in self.rows)

    @property
    def disagreements(self) -> list[dict]:
        common = self.stabilized_cardinalities
        if len(common) <= 1:
            return []
        values = [r["cardinality"] for r in self.rows if r.get("stabilized")]
        mode = max(common, key=values.count)
        return [r for r in self.rows if r.get("stabilized") and r["cardinality"] != mode]

    def to_json(self):
        return {
            "rows": self.rows,
            "stabilized_cardinalities": sorted(self.stabilized_cardinalities),
            "consistent": self.consistent,
            "sound": self.sound,
        }


def claim2_test(skew: SkewProduct, pair_samples: Sequence, eta_list: Sequence[float],
                horizons: Sequence[int] = (10_000,), recheck: bool = True,
                stable_fraction: float = 0.1) -> Claim2Report:
    """Cardinality of ``C(x, y, eta)`` for every sample, eta and horizon.

    A row counts toward the common cardinality only when its value set
    stopped growing within the first ``stable_fraction`` of the window.
    Depth shortfalls produce an Undetermined row instead of an exception.
    """
    rows = []
    for s, (x, y) in enumerate(pair_samples):
        for eta in eta_list:
            for horizon in horizons:
                row: dict[str, Any] = {"sample": s, "eta": eta, "horizon": horizon}
                try:
                    rec = characteristic_chain(skew, x, y, eta, horizon)
                except DynamicsError as exc:
                    row.update(status="Undetermined", error=str(exc), stabilized=False, cardinality=None)
                    rows.append(row)
                    continue
                row.update(
                    status="ok",
                    cardinality=rec.cardinality,
                    saturation_index=rec.saturation_index,
                    count=len(rec.indices),
                    stabilized=rec.stabilized(stable_fraction),
                )
                if recheck:
                    bad = recheck_indices(skew.base, rec)
                    row["sound"] = not bad
                    if bad:
                        row["unsound_indices"] = bad[:10]
                rows.append(row)
    return Claim2Report(rows)


def pair_json(x, y) -> dict:
    return {"x": point_to_json(x), "y": point_to_json(y)}
