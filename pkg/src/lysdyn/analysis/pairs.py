"""Finite-horizon pair classification and the searches built on it.

Verdicts are evidence over a window ``[tail_start, horizon]`` of the pair
orbit, never proofs: liminf and limsup are replaced by the minimum and
maximum observed in that window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

import numpy as np

from ..core import COMPARISON_WINDOW, System, point_to_json

DEFAULT_EPSILON = 0.25
DEFAULT_DELTA_PROX = 2.0 ** -10


class Bucket(str, Enum):
    LI_YORKE = "LiYorkeCandidate"
    ASYMPTOTIC = "AsymptoticCandidate"
    DISTAL = "DistalCandidate"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class PairVerdict:
    prox_estimate: float
    sep_estimate: float
    bucket: Bucket
    epsilon: float
    delta: float
    delta_prox: float
    distal_floor: float
    horizon: int
    tail_start: int

    @property
    def is_li_yorke(self) -> bool:
        return self.bucket is Bucket.LI_YORKE

    def to_json(self) -> dict[str, Any]:
        return {
            "bucket": self.bucket.value,
            "prox_estimate": self.prox_estimate,
            "sep_estimate": self.sep_estimate,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "delta_prox": self.delta_prox,
            "distal_floor": self.distal_floor,
            "horizon": self.horizon,
            "tail_start": self.tail_start,
        }


def default_tail_start(horizon: int) -> int:
    return horizon // 10


def default_distal_floor(epsilon: float, delta_prox: float) -> float:
    # geometric midpoint of the two thresholds, strictly above delta_prox
    return math.sqrt(epsilon * delta_prox)


def verdict_from_distances(
    distances,
    epsilon: float,
    delta_prox: float,
    horizon: int,
    tail_start: int | None = None,
    delta: float | None = None,
    distal_floor: float | None = None,
) -> PairVerdict:
    """Bucket a precomputed distance trace ``d_0..d_horizon``.

    Precedence: Li-Yorke (min < delta_prox and max > epsilon), then distal
    (min >= distal_floor), then asymptotic (max <= delta), else undetermined.
    """
    if not 0 < delta_prox < epsilon:
        raise ValueError("need 0 < delta_prox < epsilon")
    tail_start = default_tail_start(horizon) if tail_start is None else tail_start
    if not 0 <= tail_start < horizon:
        raise ValueError("need 0 <= tail_start < horizon")
    delta = epsilon if delta is None else delta
    floor = default_distal_floor(epsilon, delta_prox) if distal_floor is None else distal_floor
    if floor <= delta_prox:
        raise ValueError("distal_floor must exceed delta_prox")
    window = np.asarray(distances)[tail_start:horizon + 1]
    if window.size != horizon - tail_start + 1:
        raise ValueError("distance trace shorter than the horizon")
    prox, sep = float(window.min()), float(window.max())
    if prox < delta_prox and sep > epsilon:
        bucket = Bucket.LI_YORKE
    elif prox >= floor:
        bucket = Bucket.DISTAL
    elif sep <= delta:
        bucket = Bucket.ASYMPTOTIC
    else:
        bucket = Bucket.UNDETERMINED
    return PairVerdict(prox, sep, bucket, epsilon, delta, delta_prox, floor, horizon, tail_start)


def classify_pair(
    system: System,
    x,
    y,
    epsilon: float = DEFAULT_EPSILON,
    delta_prox: float = DEFAULT_DELTA_PROX,
    horizon: int = 10_000,
    tail_start: int | None = None,
    delta: float | None = None,
    distal_floor: float | None = None,
) -> PairVerdict:
    """Classify ``(x, y)`` as a Li-Yorke, asymptotic or distal candidate."""
    d = system.pair_orbit_distances(x, y, horizon)
    return verdict_from_distances(d, epsilon, delta_prox, horizon, tail_start, delta, distal_floor)


def required_depth(horizon: int) -> int:
    return horizon + COMPARISON_WINDOW


@dataclass
class WitnessSearch:
    found: bool
    x: Any
    y: Any = None
    verdict: PairVerdict | None = None
    attempts_used: int = 0

    def to_json(self):
        return {
            "found": self.found,
            "attempts_used": self.attempts_used,
            "y": point_to_json(self.y),
            "verdict": None if self.verdict is None else self.verdict.to_json(),
        }


def lys_witness_search(
    system: System,
    x,
    radius: float,
    epsilon: float = DEFAULT_EPSILON,
    delta_prox: float = DEFAULT_DELTA_PROX,
    horizon: int = 10_000,
    attempts: int = 20,
    seed: int = 0,
    tail_start: int | None = None,
    strategy: str = "random",
) -> WitnessSearch:
    """Look for ``y`` within ``radius`` of ``x`` forming a Li-Yorke candidate pair.

    ``strategy="surgery"`` (full shift only) first tries the doubling-gap
    tail surgery before falling back to random local samples.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    depth = required_depth(horizon)
    used = 0
    for attempt in range(attempts):
        used = attempt + 1
        if strategy == "surgery" and attempt == 0 and hasattr(system, "li_yorke_partner"):
            from ..systems import keep_for_radius

            y = system.li_yorke_partner(x, keep_for_radius(radius))
        elif strategy in ("random", "surgery"):
            y = system.sample_near(x, radius, rng, depth)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        if system.distance(x, y) >= radius:
            continue
        verdict = classify_pair(system, x, y, epsilon, delta_prox, horizon, tail_start)
        if verdict.is_li_yorke:
            return WitnessSearch(True, x, y, verdict, used)
    return WitnessSearch(False, x, None, None, used)


@dataclass
class ScrambledResult:
    points: list
    matrix: list[list[str | None]]
    verdicts: dict = field(default_factory=dict)
    candidates_tried: int = 0

    @property
    def size(self) -> int:
        return len(self.points)

    def to_json(self):
        return {
            "size": self.size,
            "candidates_tried": self.candidates_tried,
            "points": [point_to_json(p) for p in self.points],
            "matrix": self.matrix,
        }


def scrambled_search(
    system: System,
    epsilon: float = DEFAULT_EPSILON,
    delta_prox: float = DEFAULT_DELTA_PROX,
    set_size: int = 5,
    horizon: int = 10_000,
    attempts: int = 100,
    seed: int = 0,
    candidates: Iterable | None = None,
    tail_start: int | None = None,
    label: int | None = None,
) -> ScrambledResult:
    """Greedy finite scrambled set: keep a candidate that is Li-Yorke against every kept point.

    Candidates come from ``candidates`` when given, otherwise from the
    system's sampler; ``label`` pins the fiber label of sampled skew points.
    """
    if set_size < 2:
        raise ValueError("set_size must be at least 2")
    rng = np.random.default_rng(seed)
    depth = required_depth(horizon)
    if candidates is None:
        def _draw():
            for _ in range(attempts):
                p = system.sample(rng, depth)
                if label is not None:
                    p = type(p)(p.base, label)
                yield p
        candidates = _draw()
    kept: list = []
    verdicts: dict[tuple[int, int], PairVerdict] = {}
    tried = 0
    for cand in candidates:
        if len(kept) >= set_size or tried >= attempts:
            break
        tried += 1
        trial = {}
        for i, p in enumerate(kept):
            v = classify_pair(system, p, cand, epsilon, delta_prox, horizon, tail_start)
            if not v.is_li_yorke:
                break
            trial[(i, len(kept))] = v
        else:
            verdicts.update(trial)
            kept.append(cand)
    n = len(kept)
    matrix = [[None if i == j else verdicts[(min(i, j), max(i, j))].bucket.value for j in range(n)] for i in range(n)]
    return ScrambledResult(kept, matrix, verdicts, tried)


@dataclass
class DensityReport:
    samples: int
    counts: dict[str, int]
    prox_estimates: list[float]

    @property
    def fractions(self) -> dict[str, float]:
        return {k: v / self.samples for k, v in self.counts.items()}

    def to_json(self):
        return {"samples": self.samples, "counts": self.counts, "fractions": self.fractions}


def distal_density(
    system: System,
    cell=None,
    samples: int = 500,
    epsilon: float = DEFAULT_EPSILON,
    delta_prox: float = DEFAULT_DELTA_PROX,
    horizon: int = 10_000,
    seed: int = 0,
    tail_start: int | None = None,
) -> DensityReport:
    """Bucket fractions for pairs drawn from ``cell x cell`` (the whole space if ``cell`` is None)."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    depth = required_depth(horizon)
    counts = {b.value: 0 for b in Bucket}
    prox = []
    for _ in range(samples):
        if cell is None:
            x, y = system.sample(rng, depth), system.sample(rng, depth)
        else:
            x, y = system.sample_in(cell, rng, depth), system.sample_in(cell, rng, depth)
        v = classify_pair(system, x, y, epsilon, delta_prox, horizon, tail_start)
        counts[v.bucket.value] += 1
        prox.append(v.prox_estimate)
    return DensityReport(samples, counts, prox)


@dataclass
class TransitiveCandidate:
    x: Any
    y: Any
    score: float
    visited: int
    total: int

    def to_json(self):
        return {"y": point_to_json(self.y), "score": self.score, "visited": self.visited, "total": self.total}


def net_coverage(system: System, x, y, resolution: int, horizon: int) -> tuple[int, int]:
    """Cells of the product net ``X x X`` visited by ``(T^i x, T^i y)``, ``i <= horizon``."""
    total = system.net_size(resolution) ** 2
    seen = set()
    for i in range(horizon + 1):
        if i:
            x, y = system.step(x), system.step(y)
        seen.add((system.net_cell(x, resolution), system.net_cell(y, resolution)))
        if len(seen) == total:
            break
    return len(seen), total


def transitive_pair_candidate(
    system: System,
    x,
    resolution: int = 2,
    horizon: int = 10_000,
    seed: int = 0,
    radius: float | None = None,
    y=None,
) -> TransitiveCandidate:
    """Pick a partner ``y`` for ``x`` and score how much of the product net the pair orbit visits.

    A score below 1 means "candidate only"; even a score of 1 is not a
    certificate of transitivity.
    """
    if y is None:
        rng = np.random.default_rng(seed)
        depth = required_depth(horizon)
        y = system.sample(rng, depth) if radius is None else system.sample_near(x, radius, rng, depth)
    visited, total = net_coverage(system, x, y, resolution, horizon)
    return TransitiveCandidate(x, y, visited / total, visited, total)
