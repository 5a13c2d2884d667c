"""Point representations, metrics and the interface shared by every system.

Infinite points are stored as finite truncations with an explicit depth
budget. Symbolic and odometer points use the first-disagreement metric
``2**-j``; circle points use arc length measured in full turns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np

# Comparisons never look further than this many symbols past the horizon.
COMPARISON_WINDOW = 64

# 2**-1074 is the smallest positive double; deeper agreement is clamped there
# so that a distance of 0.0 keeps meaning "indistinguishable at this depth".
_MAX_EXPONENT = 1074


class DynamicsError(Exception):
    """Base class for all errors raised by this package."""


class KindMismatch(DynamicsError, TypeError):
    pass


class DepthExhausted(DynamicsError):
    """A truncated point was asked for more symbols than it trusts."""


class PoisonedPoint(DynamicsError):
    """An odometer point whose carry left the stored digits."""


class UndecidableCell(DynamicsError):
    """Cell membership cannot be decided at the available precision."""


def dyadic(j: int) -> float:
    return math.ldexp(1.0, -min(j, _MAX_EXPONENT))


def _first_mismatch(a: bytes, b: bytes) -> int | None:
    n = min(len(a), len(b))
    head = min(n, 64)
    if a[:head] != b[:head]:
        for i in range(head):
            if a[i] != b[i]:
                return i
    if n <= head:
        return None
    av = np.frombuffer(a, dtype=np.uint8, count=n)
    bv = np.frombuffer(b, dtype=np.uint8, count=n)
    idx = np.flatnonzero(av != bv)
    return int(idx[0]) if idx.size else None


_SYMBOLS = "0123456789abcdefghijklmnopqrstuvwxyz"


class SymbolicWord:
    """Truncated point of a one-sided subshift.

    ``data[start:]`` holds the stored symbols and ``depth`` says how many
    of them are trusted. Shifting is O(1): the buffer is shared and only
    ``start`` and ``depth`` move.
    """

    __slots__ = ("alphabet_size", "data", "start", "depth")

    def __init__(self, alphabet_size: int, data: bytes, start: int = 0, depth: int | None = None):
        if alphabet_size < 1 or alphabet_size > 256:
            raise ValueError("alphabet_size must be in 1..256")
        avail = len(data) - start
        if start < 0 or avail < 0:
            raise ValueError("start outside the buffer")
        if depth is None:
            depth = avail
        if depth < 0 or depth > avail:
            raise ValueError(f"depth {depth} exceeds the {avail} stored symbols")
        self.alphabet_size = alphabet_size
        self.data = bytes(data)
        self.start = start
        self.depth = depth

    @classmethod
    def from_digits(cls, digits, alphabet_size: int = 2, depth: int | None = None) -> SymbolicWord:
        if isinstance(digits, str):
            buf = bytes(_SYMBOLS.index(c) for c in digits)
        else:
            buf = bytes(digits)
        if buf and max(buf) >= alphabet_size:
            raise ValueError("digit outside the alphabet")
        return cls(alphabet_size, buf, 0, depth)

    @property
    def digits(self) -> bytes:
        return self.data[self.start:]

    @property
    def trusted(self) -> bytes:
        return self.data[self.start:self.start + self.depth]

    def symbol(self, i: int) -> int:
        if not 0 <= i < self.depth:
            raise DepthExhausted(f"symbol {i} requested from a point of depth {self.depth}")
        return self.data[self.start + i]

    def prefix(self, n: int) -> bytes:
        if n > self.depth:
            raise DepthExhausted(f"prefix of length {n} requested from a point of depth {self.depth}")
        return self.data[self.start:self.start + n]

    def shift(self, n: int = 1) -> SymbolicWord:
        if n > self.depth:
            raise DepthExhausted(f"cannot shift {n} times a point of depth {self.depth}")
        return SymbolicWord(self.alphabet_size, self.data, self.start + n, self.depth - n)

    def array(self, n: int | None = None) -> np.ndarray:
        n = self.depth if n is None else n
        if n > self.depth:
            raise DepthExhausted(f"{n} symbols requested from a point of depth {self.depth}")
        return np.frombuffer(self.data, dtype=np.uint8, count=n, offset=self.start)

    def to_str(self, n: int | None = None) -> str:
        body = self.trusted if n is None else self.prefix(min(n, self.depth))
        if self.alphabet_size <= len(_SYMBOLS):
            return "".join(_SYMBOLS[s] for s in body)
        return ",".join(str(s) for s in body)

    def _distance(self, other: SymbolicWord) -> float:
        if self.alphabet_size != other.alphabet_size:
            raise KindMismatch("words over different alphabets")
        n = min(self.depth, other.depth)
        if n < 1:
            raise DepthExhausted("distance needs at least one trusted symbol")
        j = _first_mismatch(self.data[self.start:self.start + n], other.data[other.start:other.start + n])
        return 0.0 if j is None else dyadic(j)

    def __eq__(self, other):
        if not isinstance(other, SymbolicWord):
            return NotImplemented
        return (self.alphabet_size, self.depth, self.trusted) == (other.alphabet_size, other.depth, other.trusted)

    def __hash__(self):
        return hash((self.alphabet_size, self.depth, self.trusted))

    def __repr__(self):
        body = self.to_str(24) + ("..." if self.depth > 24 else "")
        return f"SymbolicWord({body!r}, depth={self.depth})"

    def to_json(self) -> Any:
        return self.to_str()


@dataclass(frozen=True)
class CircleAngle:
    """Position on the unit circle as a fraction of a full turn."""

    value: float

    def __post_init__(self):
        v = float(self.value) % 1.0
        if v == 1.0:
            v = 0.0
        object.__setattr__(self, "value", v)

    def __add__(self, other) -> CircleAngle:
        if isinstance(other, CircleAngle):
            other = other.value
        return CircleAngle(self.value + other)

    def _distance(self, other: CircleAngle) -> float:
        d = abs(self.value - other.value)
        return min(d, 1.0 - d)

    def to_json(self) -> Any:
        return self.value


@dataclass(frozen=True)
class OdometerDigits:
    """Truncated point of a product of cyclic digit spaces.

    ``digits[j]`` lives in ``range(bases[j])``; digit 1 in the usual
    notation is ``digits[0]``. ``overflow`` is set once a carry leaves the
    stored digits, after which the point cannot be compared.
    """

    bases: tuple[int, ...]
    digits: tuple[int, ...]
    overflow: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bases", tuple(int(b) for b in self.bases))
        object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))
        if len(self.bases) != len(self.digits):
            raise ValueError("bases and digits differ in length")
        if any(b < 2 for b in self.bases):
            raise ValueError("every base must be at least 2")
        if any(not 0 <= d < b for d, b in zip(self.digits, self.bases)):
            raise ValueError("digit outside its base")

    @classmethod
    def zero(cls, bases) -> OdometerDigits:
        return cls(tuple(bases), (0,) * len(bases))

    def _check(self):
        if self.overflow:
            raise PoisonedPoint("odometer point overflowed its stored digits")

    def _distance(self, other: OdometerDigits) -> float:
        self._check()
        other._check()
        if self.bases != other.bases:
            raise KindMismatch("odometer points with different bases")
        if not self.bases:
            raise DepthExhausted("odometer point with no digits")
        for j, (a, b) in enumerate(zip(self.digits, other.digits), start=1):
            if a != b:
                return dyadic(j)
        return 0.0

    def to_json(self) -> Any:
        return {"bases": list(self.bases), "digits": ",".join(map(str, self.digits)), "overflow": self.overflow}


@dataclass(frozen=True)
class ProductPoint:
    left: Any
    right: Any

    def _distance(self, other: ProductPoint) -> float:
        return max(distance(self.left, other.left), distance(self.right, other.right))

    def to_json(self) -> Any:
        return {"left": point_to_json(self.left), "right": point_to_json(self.right)}


@dataclass(frozen=True)
class FiberedPoint:
    """Point ``(base, label)`` of a skew product with a finite discrete fiber."""

    base: Any
    label: int

    def _distance(self, other: FiberedPoint) -> float:
        return max(distance(self.base, other.base), 0.0 if self.label == other.label else 1.0)

    def to_json(self) -> Any:
        return {"base": point_to_json(self.base), "label": self.label}


def distance(p, q) -> float:
    """Distance between two points of the same kind.

    Products use the max-metric and finite fibers the discrete metric. A
    value of 0.0 means the truncations agree on their full shared depth,
    which is not a proof of equality.
    """
    if type(p) is not type(q):
        raise KindMismatch(f"cannot compare {type(p).__name__} with {type(q).__name__}")
    try:
        method = p._distance
    except AttributeError:
        raise KindMismatch(f"no metric for {type(p).__name__}") from None
    return method(q)


def first_disagreement(p, q) -> int | None:
    """Index of the first differing symbol: 0-based for words, 1-based for odometers."""
    if type(p) is not type(q):
        raise KindMismatch("points of different kinds")
    if isinstance(p, SymbolicWord):
        n = min(p.depth, q.depth)
        return _first_mismatch(p.trusted[:n], q.trusted[:n])
    if isinstance(p, OdometerDigits):
        p._check()
        q._check()
        for j, (a, b) in enumerate(zip(p.digits, q.digits), start=1):
            if a != b:
                return j
        return None
    raise KindMismatch(f"first_disagreement is undefined for {type(p).__name__}")


def point_to_json(p) -> Any:
    if p is None:
        return None
    return p.to_json()


class System:
    """A topological dynamical system ``(X, T)`` at finite precision.

    Concrete systems override :meth:`step`; faster :meth:`iterate` and
    :meth:`pair_orbit_distances` overrides must agree with the stepwise
    definitions.
    """

    identifier = "system"
    symbolic = False

    def step(self, p):
        raise NotImplementedError

    def validate(self, p) -> None:
        pass

    def distance(self, p, q) -> float:
        return distance(p, q)

    def iterate(self, p, n: int):
        for _ in range(n):
            p = self.step(p)
        return p

    def orbit(self, p, n: int) -> Iterator:
        yield p
        for _ in range(n):
            p = self.step(p)
            yield p

    def pair_orbit_distances(self, x, y, n: int) -> np.ndarray:
        out = np.empty(n + 1)
        for i in range(n + 1):
            if i:
                x, y = self.step(x), self.step(y)
            out[i] = self.distance(x, y)
        return out

    # Samplers take a numpy Generator; depth is ignored by non-symbolic systems.
    def sample(self, rng: np.random.Generator, depth: int | None = None):
        raise NotImplementedError(f"{self.identifier} has no sampler")

    def sample_near(self, x, radius: float, rng: np.random.Generator, depth: int | None = None):
        raise NotImplementedError(f"{self.identifier} has no local sampler")

    def sample_in(self, cell, rng: np.random.Generator, depth: int | None = None):
        raise NotImplementedError(f"{self.identifier} cannot sample inside cells")

    def net_cell(self, p, resolution: int):
        raise NotImplementedError(f"{self.identifier} has no finite net")

    def net_size(self, resolution: int) -> int:
        raise NotImplementedError(f"{self.identifier} has no finite net")

    def hitting_witness(self, U, V, n: int):
        raise NotImplementedError(f"{self.identifier} cannot construct hitting witnesses")

    def parse_point(self, text: str):
        raise NotImplementedError(f"{self.identifier} cannot parse points")

    def __repr__(self):
        return f"<{type(self).__name__} {self.identifier}>"


def step(system: System, p):
    system.validate(p)
    return system.step(p)


def pair_orbit_distances(system: System, x, y, n: int) -> np.ndarray:
    """Return ``[d(x, y), d(Tx, Ty), ..., d(T^n x, T^n y)]``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    system.validate(x)
    system.validate(y)
    return system.pair_orbit_distances(x, y, n)


def word_orbit_distances(x: SymbolicWord, y: SymbolicWord, n: int) -> np.ndarray:
    """Vectorized ``pair_orbit_distances`` for two words under the shift."""
    if x.alphabet_size != y.alphabet_size:
        raise KindMismatch("words over different alphabets")
    shared = min(x.depth, y.depth)
    if shared < n + 1:
        raise DepthExhausted(f"horizon {n} needs depth {n + 1}, points have {shared}")
    mism = np.flatnonzero(x.array(shared) != y.array(shared))
    steps = np.arange(n + 1)
    pos = np.searchsorted(mism, steps)
    nxt = np.full(n + 1, shared, dtype=np.int64)
    ok = pos < mism.size
    nxt[ok] = mism[pos[ok]]
    gap = np.minimum(nxt - steps, _MAX_EXPONENT).astype(np.int32)
    out = np.ldexp(1.0, -gap)
    out[nxt == shared] = 0.0
    return out
