"""Concrete base systems and the string catalog used by the CLI."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .cells import ArcCell, CylinderCell
from .core import (
    COMPARISON_WINDOW,
    CircleAngle,
    DepthExhausted,
    KindMismatch,
    OdometerDigits,
    PoisonedPoint,
    SymbolicWord,
    System,
    UndecidableCell,
    distance,
    dyadic,
    word_orbit_distances,
)

DEFAULT_ALPHA = math.sqrt(2.0) - 1.0


def keep_for_radius(radius: float) -> int:
    """Smallest ``j`` with ``2**-j < radius``: agreeing on ``j`` symbols is enough."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    j = 0
    while dyadic(j) >= radius:
        j += 1
    return j


def doubling_gap_word(depth: int, alphabet_size: int = 2) -> bytes:
    """``1 0 1 0^2 1 0^4 1 0^8 ...`` truncated to ``depth`` symbols."""
    buf = bytearray(depth)
    pos, gap = 0, 1
    while pos < depth:
        buf[pos] = 1
        pos += gap + 1
        gap *= 2
    return bytes(buf)


class _ShiftSpace(System):
    """Shared machinery for one-sided shifts on finite alphabets."""

    symbolic = True
    alphabet_size = 2

    def validate(self, p):
        if not isinstance(p, SymbolicWord):
            raise KindMismatch(f"{self.identifier} expects SymbolicWord points")
        if p.alphabet_size != self.alphabet_size:
            raise KindMismatch(f"{self.identifier} works over {self.alphabet_size} symbols")

    def step(self, p: SymbolicWord) -> SymbolicWord:
        if p.depth < 1:
            raise DepthExhausted("cannot shift a point with no trusted symbols")
        return p.shift(1)

    def iterate(self, p: SymbolicWord, n: int) -> SymbolicWord:
        return p.shift(n)

    def pair_orbit_distances(self, x, y, n):
        return word_orbit_distances(x, y, n)

    def net_cell(self, p: SymbolicWord, resolution: int):
        return p.prefix(resolution)

    def parse_point(self, text: str) -> SymbolicWord:
        return SymbolicWord.from_digits(text, self.alphabet_size)


class FullShift(_ShiftSpace):
    """Left shift on all one-sided sequences over ``alphabet_size`` symbols."""

    def __init__(self, alphabet_size: int = 2):
        if alphabet_size < 2:
            raise ValueError("the full shift needs at least two symbols")
        self.alphabet_size = alphabet_size
        self.identifier = f"full-shift:{alphabet_size}"

    def _random(self, rng, n: int) -> bytes:
        return rng.integers(0, self.alphabet_size, n, dtype=np.uint8).tobytes()

    def sample(self, rng, depth=None):
        return SymbolicWord(self.alphabet_size, self._random(rng, depth or COMPARISON_WINDOW))

    def sample_near(self, x, radius, rng, depth=None):
        depth = depth or x.depth
        keep = keep_for_radius(radius)
        return SymbolicWord(self.alphabet_size, x.prefix(keep) + self._random(rng, depth - keep))

    def sample_in(self, cell, rng, depth=None):
        if not isinstance(cell, CylinderCell):
            raise KindMismatch("the full shift samples inside cylinder cells")
        depth = depth or COMPARISON_WINDOW
        return SymbolicWord(self.alphabet_size, bytes(cell.word) + self._random(rng, depth - len(cell)))

    def net_size(self, resolution):
        return self.alphabet_size ** resolution

    def hitting_witness(self, U, V, n):
        if not (isinstance(U, CylinderCell) and isinstance(V, CylinderCell)):
            raise KindMismatch("the full shift needs cylinder cells")
        buf = [None] * max(len(U), n + len(V))
        for i, s in enumerate(U.word):
            buf[i] = s
        for i, s in enumerate(V.word):
            if buf[n + i] is not None and buf[n + i] != s:
                return None
            buf[n + i] = s
        return SymbolicWord(self.alphabet_size, bytes(0 if s is None else s for s in buf))

    def li_yorke_partner(self, x: SymbolicWord, keep: int) -> SymbolicWord:
        """Copy ``x`` on ``keep`` symbols, then flip it along a doubling-gap pattern.

        The result disagrees with ``x`` at times ``keep + 0, keep + 2,
        keep + 5, ...`` and agrees on ever longer stretches in between.
        """
        n = x.depth
        flips = np.frombuffer(doubling_gap_word(max(n - keep, 0)), dtype=np.uint8)
        out = x.array().copy()
        out[keep:] = (out[keep:] + flips) % self.alphabet_size
        return SymbolicWord(self.alphabet_size, out.tobytes())

    def scrambled_family(self, count: int, depth: int) -> list[SymbolicWord]:
        """Words pairwise proximal and separated, built from interleaved blocks.

        Phases of doubling length alternate between all-zero stretches and
        stretches that open with the binary code of the word's index, so
        any two words meet at distance 1 once per coding phase.
        """
        width = max(1, (count - 1).bit_length())
        words = [bytearray(depth) for _ in range(count)]
        pos, length, coding = 0, 2 * width, False
        while pos < depth:
            if coding:
                for k, w in enumerate(words):
                    code = [(k >> b) & 1 for b in range(width)]
                    for i, bit in enumerate(code):
                        if pos + i < depth:
                            w[pos + i] = bit
            pos += length
            length *= 2
            coding = not coding
        return [SymbolicWord(self.alphabet_size, bytes(w)) for w in words]


_DIGIT_CHARS = bytes.maketrans(b"\x00\x01", b"01")


def chacon_length(n: int) -> int:
    return (3 ** (n + 1) - 1) // 2


@functools.lru_cache(maxsize=None)
def _chacon_bytes(n: int) -> bytes:
    if n < 0:
        raise ValueError("level must be non-negative")
    block = b"\x00"
    for _ in range(n):
        block = block + block + b"\x01" + block
    return block


def chacon_prefix(n: int) -> str:
    """Chacon block ``B_n`` with ``B_0 = 0`` and ``B_{n+1} = B_n B_n 1 B_n``."""
    return _chacon_bytes(n).translate(_DIGIT_CHARS).decode("ascii")


def chacon_level_for(length: int) -> int:
    n = 0
    while chacon_length(n) < length:
        n += 1
    return n


def chacon_point(depth: int, offset: int = 0) -> SymbolicWord:
    """The subword of the Chacon word starting at ``offset`` as a depth-``depth`` point."""
    if depth < 0 or offset < 0:
        raise ValueError("depth and offset must be non-negative")
    word = _chacon_bytes(chacon_level_for(offset + depth))
    return SymbolicWord(2, word, offset, depth)


class ChaconSubshift(_ShiftSpace):
    """Orbit closure of the Chacon word under the shift.

    The prefix ``B_levels`` is built eagerly; all points are windows into it.
    """

    def __init__(self, levels: int = 13):
        self.levels = levels
        self.word = _chacon_bytes(levels)
        self.alphabet_size = 2
        self.identifier = "chacon" if levels == 13 else f"chacon:levels={levels}"
        self._language: dict[int, int] = {}

    def point(self, offset: int, depth: int | None = None) -> SymbolicWord:
        if depth is None:
            depth = len(self.word) - offset
        if offset < 0 or offset + depth > len(self.word):
            raise DepthExhausted(f"offset {offset} + depth {depth} exceeds the cached {len(self.word)} symbols")
        return SymbolicWord(2, self.word, offset, depth)

    def _limit(self, depth):
        limit = len(self.word) - depth
        if limit < 0:
            raise DepthExhausted(f"depth {depth} exceeds the cached Chacon prefix")
        return limit

    def sample(self, rng, depth=None):
        depth = depth or COMPARISON_WINDOW
        return self.point(int(rng.integers(0, self._limit(depth) + 1)), depth)

    def _find_from(self, prefix: bytes, rng, depth: int) -> SymbolicWord:
        limit = self._limit(depth)
        start = int(rng.integers(0, limit + 1))
        pos = self.word.find(prefix, start, limit + len(prefix))
        if pos < 0:
            pos = self.word.find(prefix, 0, limit + len(prefix))
        if pos < 0:
            raise ValueError(f"{prefix!r} does not occur in the cached Chacon prefix")
        return self.point(pos, depth)

    def sample_near(self, x, radius, rng, depth=None):
        depth = depth or x.depth
        return self._find_from(x.prefix(keep_for_radius(radius)), rng, depth)

    def sample_in(self, cell, rng, depth=None):
        if not isinstance(cell, CylinderCell):
            raise KindMismatch("the Chacon subshift samples inside cylinder cells")
        return self._find_from(bytes(cell.word), rng, depth or COMPARISON_WINDOW)

    def net_size(self, resolution):
        if resolution not in self._language:
            n = min(len(self.word), 300_000)
            arr = np.frombuffer(self.word, dtype=np.uint8, count=n).astype(np.int64)
            codes = np.zeros(n - resolution + 1, dtype=np.int64)
            for i in range(resolution):
                codes = codes * 2 + arr[i:n - resolution + 1 + i]
            self._language[resolution] = int(np.unique(codes).size)
        return self._language[resolution]

    def hitting_witness(self, U, V, n):
        if not (isinstance(U, CylinderCell) and isinstance(V, CylinderCell)):
            raise KindMismatch("the Chacon subshift needs cylinder cells")
        u, v = bytes(U.word), bytes(V.word)
        need = max(len(u), n + len(v))
        pos = self.word.find(u)
        while 0 <= pos <= len(self.word) - need:
            if self.word[pos + n:pos + n + len(v)] == v:
                return self.point(pos, need)
            pos = self.word.find(u, pos + 1)
        return None


class IrrationalRotation(System):
    """Rotation ``v -> v + alpha (mod 1)`` of the circle."""

    def __init__(self, alpha: float = DEFAULT_ALPHA):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.alpha = float(alpha)
        self.identifier = f"rotation:{self.alpha!r}"

    def validate(self, p):
        if not isinstance(p, CircleAngle):
            raise KindMismatch("rotations act on CircleAngle points")

    def step(self, p: CircleAngle) -> CircleAngle:
        return CircleAngle(p.value + self.alpha)

    def sample(self, rng, depth=None):
        return CircleAngle(rng.random())

    def sample_near(self, x, radius, rng, depth=None):
        r = min(radius, 0.5)
        return CircleAngle(x.value + 0.999 * r * (2.0 * rng.random() - 1.0))

    def sample_in(self, cell, rng, depth=None):
        if not isinstance(cell, ArcCell):
            raise KindMismatch("rotations sample inside arc cells")
        return CircleAngle(cell.lo + cell.length * (0.001 + 0.998 * rng.random()))

    def net_cell(self, p, resolution):
        return min(int(p.value * resolution), resolution - 1)

    def net_size(self, resolution):
        return resolution

    def hitting_witness(self, U, V, n):
        if not (isinstance(U, ArcCell) and isinstance(V, ArcCell)):
            raise KindMismatch("rotations need arc cells")
        s = (n * self.alpha) % 1.0
        a = (U.lo + s - V.lo) % 1.0
        pieces = []
        if a < V.length:
            pieces.append((a, min(a + U.length, V.length)))
        if a + U.length > 1.0:
            pieces.append((0.0, min(a + U.length - 1.0, V.length)))
        best = max(pieces, key=lambda p: p[1] - p[0], default=None)
        margin = 4 * 1e-9
        if best is not None and best[1] - best[0] >= margin:
            mid = 0.5 * (best[0] + best[1])
            return CircleAngle(V.lo + mid - s)
        edges_u = (a, (a + U.length) % 1.0)
        for e in edges_u:
            for f in (0.0, V.length):
                d = abs(e - f) % 1.0
                if min(d, 1.0 - d) < margin:
                    raise UndecidableCell(f"arcs touch within {margin} at time {n}")
        return None

    def parse_point(self, text):
        return CircleAngle(float(text))


def odometer_step(d: OdometerDigits) -> OdometerDigits:
    """Add one with carry from the left; set ``overflow`` if the carry escapes."""
    if d.overflow:
        raise PoisonedPoint("cannot step a poisoned odometer point")
    digits = list(d.digits)
    for j, b in enumerate(d.bases):
        if digits[j] + 1 < b:
            digits[j] += 1
            return OdometerDigits(d.bases, digits)
        digits[j] = 0
    return OdometerDigits(d.bases, digits, overflow=True)


def odometer_advance(d: OdometerDigits, n: int) -> OdometerDigits:
    """``tau**n`` by mixed-radix addition of ``n``."""
    if d.overflow:
        raise PoisonedPoint("cannot step a poisoned odometer point")
    if n < 0:
        raise ValueError("n must be non-negative")
    digits = list(d.digits)
    carry = n
    for j, b in enumerate(d.bases):
        if not carry:
            break
        carry, digits[j] = divmod(digits[j] + carry, b)
    return OdometerDigits(d.bases, digits, overflow=carry > 0)


def odometer_advance_many(digits: np.ndarray, bases, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``tau**n`` on an ``(N, J)`` digit array; returns (digits, overflow mask)."""
    out = np.array(digits, dtype=np.int64, copy=True)
    # only rows that still carry are touched, so small n costs about two digits per row
    rows = np.arange(out.shape[0]) if n else np.arange(0)
    carry = np.full(rows.size, n, dtype=np.int64)
    for j, b in enumerate(bases):
        if not rows.size:
            break
        s = out[rows, j] + carry
        out[rows, j] = s % b
        carry = s // b
        live = carry > 0
        rows, carry = rows[live], carry[live]
    overflow = np.zeros(out.shape[0], dtype=bool)
    overflow[rows] = True
    return out, overflow


def first_disagreement_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1-based first differing digit per row, 0 where rows agree entirely."""
    diff = a != b
    has = diff.any(axis=1)
    return np.where(has, diff.argmax(axis=1) + 1, 0)


def odometer_return_period(bases, delta: float) -> int:
    """Period ``m`` after which every odometer point is back within ``delta``.

    Digits ``1..J'`` (``J'`` minimal with ``2**-J' < delta``) run through a
    full cycle every ``p_1 * ... * p_J'`` steps, so ``tau**(k*m)`` moves
    no point by ``delta`` or more.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    j = keep_for_radius(delta)
    if j > len(bases):
        raise ValueError(f"delta={delta} needs {j} digits, bases give {len(bases)}")
    return math.prod(int(b) for b in bases[:j])


class Odometer(System):
    def __init__(self, bases=(2,) * 32):
        self.bases = tuple(int(b) for b in bases)
        if not self.bases or any(b < 2 for b in self.bases):
            raise ValueError("odometer bases must be integers >= 2")
        self.identifier = "odometer:" + _format_bases(self.bases)

    def validate(self, p):
        if not isinstance(p, OdometerDigits):
            raise KindMismatch("odometers act on OdometerDigits points")
        if p.bases != self.bases:
            raise KindMismatch("point has different bases")

    def step(self, p):
        return odometer_step(p)

    def iterate(self, p, n):
        return odometer_advance(p, n)

    def sample(self, rng, depth=None):
        return OdometerDigits(self.bases, [int(rng.integers(0, b)) for b in self.bases])

    def sample_near(self, x, radius, rng, depth=None):
        keep = keep_for_radius(radius)
        tail = [int(rng.integers(0, b)) for b in self.bases[keep:]]
        return OdometerDigits(self.bases, list(x.digits[:keep]) + tail)

    def sample_in(self, cell, rng, depth=None):
        keep = len(cell)
        tail = [int(rng.integers(0, b)) for b in self.bases[keep:]]
        return OdometerDigits(self.bases, list(cell.word) + tail)

    def net_cell(self, p, resolution):
        return p.digits[:resolution]

    def net_size(self, resolution):
        return math.prod(self.bases[:resolution])

    def hitting_witness(self, U, V, n):
        L = max(len(U), len(V))
        radix = self.bases[:L]
        period = math.prod(radix)
        free = [range(b) for b in radix[len(U):]]
        for tail in np.ndindex(*[len(r) for r in free]) if free else [()]:
            head = list(U.word) + list(tail)
            value, scale = 0, 1
            for d, b in zip(head, radix):
                value += d * scale
                scale *= b
            value = (value + n) % period
            img = []
            for b in radix:
                value, d = divmod(value, b)
                img.append(d)
            if tuple(img[:len(V)]) == V.word:
                return OdometerDigits(self.bases, head + [0] * (len(self.bases) - L))
        return None

    def parse_point(self, text):
        return OdometerDigits(self.bases, [int(s) for s in text.split(",")])


def _format_bases(bases) -> str:
    if len(set(bases)) == 1 and len(bases) > 3:
        return f"{bases[0]}*{len(bases)}"
    return ",".join(map(str, bases))


def parse_bases(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "*" in part:
            b, r = part.split("*")
            out.extend([int(b)] * int(r))
        else:
            out.append(int(part))
    return tuple(out)


# Circle extension with non-trivial monodromy. Arcs A = [0, 1/2] and
# B = [1/2, 1] (closed, in turns) meet at a = 0 and b = 1/2.
ARC_A_END = 0.5


def in_arc_a(v: float) -> bool:
    return 0.0 <= v <= ARC_A_END


def sheet_parameter(v: float) -> float:
    """``t(v) = rho(a, v) / rho(a, b)`` on B: 0 at ``a``, 1 at ``b``."""
    return 2.0 * min(v, 1.0 - v)


@dataclass(frozen=True)
class Lemma7Point:
    y0: Any
    y1: CircleAngle
    z: CircleAngle

    def _distance(self, other):
        d = max(distance(self.y1, other.y1), distance(self.z, other.z))
        if self.y0 is not None:
            d = max(d, distance(self.y0, other.y0))
        return d

    def to_json(self):
        y0 = None if self.y0 is None else self.y0.to_json()
        return {"y0": y0, "y1": self.y1.value, "z": self.z.value}


class Lemma7Extension(System):
    """k-to-1 isometric extension of ``Y0 x circle`` that is not a skew product.

    Over ``v`` in A the fiber is the set ``K0`` of k-th roots of unity;
    over ``v`` in B minus A it is ``K0`` turned by ``t(v)/k``. Crossing B
    therefore turns every fiber by ``1/k``. The base map rotates the circle
    factor by ``beta`` and steps ``y0`` with an optional system. With
    ``beta`` in (1/2, 1) orbits cross B from ``a`` to ``b`` and the
    extension is continuous; with ``beta`` in (0, 1/2) it stays a
    bijection commuting with the factor map but jumps at ``b``.
    """

    def __init__(self, k: int = 3, beta: float = 2.0 - math.sqrt(2.0), y0_system: System | None = None):
        if k < 2:
            raise ValueError("k must be at least 2")
        if not 0.0 < beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        self.k = int(k)
        self.beta = float(beta)
        self.y0_system = y0_system
        self.identifier = f"lemma7:k={self.k}"

    @property
    def continuous(self) -> bool:
        return self.beta > 0.5

    def fiber_set(self, y1: float) -> list[float]:
        shift = 0.0 if in_arc_a(y1) else sheet_parameter(y1)
        return [((j + shift) / self.k) % 1.0 for j in range(self.k)]

    def transport(self, y_from: float, y_to: float) -> float:
        """Fiber rotation in turns applied when the circle factor moves ``y_from -> y_to``."""
        src_a, dst_a = in_arc_a(y_from), in_arc_a(y_to)
        if src_a and dst_a:
            t = 0.0
        elif src_a:
            t = sheet_parameter(y_to) - 0.0
        elif dst_a:
            t = 1.0 - sheet_parameter(y_from)
        else:
            t = sheet_parameter(y_to) - sheet_parameter(y_from)
        return t / self.k

    def base_step(self, y0, y1: CircleAngle):
        y0 = None if self.y0_system is None else self.y0_system.step(y0)
        return y0, CircleAngle(y1.value + self.beta)

    def project(self, p: Lemma7Point):
        return p.y0, p.y1

    def validate(self, p):
        if not isinstance(p, Lemma7Point):
            raise KindMismatch("the circle extension acts on Lemma7Point points")

    def contains(self, p: Lemma7Point, tol: float = 1e-9) -> bool:
        return any(distance(p.z, CircleAngle(f)) < tol for f in self.fiber_set(p.y1.value))

    def step(self, p: Lemma7Point) -> Lemma7Point:
        y0, s1 = self.base_step(p.y0, p.y1)
        return Lemma7Point(y0, s1, CircleAngle(p.z.value + self.transport(p.y1.value, s1.value)))

    def point(self, y1: float, sheet: int, y0=None) -> Lemma7Point:
        return Lemma7Point(y0, CircleAngle(y1), CircleAngle(self.fiber_set(CircleAngle(y1).value)[sheet % self.k]))

    def sample(self, rng, depth=None):
        y0 = None if self.y0_system is None else self.y0_system.sample(rng, depth)
        return self.point(rng.random(), int(rng.integers(0, self.k)), y0)

    def grid(self, n: int) -> list[Lemma7Point]:
        """At least ``n`` points: every fiber over ``ceil(n/k)`` evenly spaced base angles."""
        m = -(-n // self.k)
        return [self.point((i + 0.5) / m, j) for i in range(m) for j in range(self.k)]

    def injectivity_violations(self, points, tol: float = 1e-9, separation: float = 1e-7) -> list[tuple[int, int]]:
        """Index pairs whose images coincide within ``tol`` although the points are ``separation`` apart.

        Images are compared in the (y1, z) torus with the max-metric; the
        y0 coordinate is ignored, so this is meant for ``y0_system=None``.
        """
        from scipy.spatial import cKDTree

        src = np.array([[p.y1.value, p.z.value] for p in points])
        img = np.array([[q.y1.value, q.z.value] for q in (self.step(p) for p in points)])
        tree = cKDTree(img % 1.0, boxsize=1.0)
        bad = []
        for i, j in sorted(tree.query_pairs(tol, p=np.inf)):
            gap = np.abs(src[i] - src[j])
            if np.max(np.minimum(gap, 1.0 - gap)) >= separation:
                bad.append((i, j))
        return bad

    def monodromy(self, loop) -> float:
        """Total fiber rotation in turns along a closed loop of circle-factor angles."""
        vals = [CircleAngle(v).value for v in loop]
        return sum(self.transport(a, b) for a, b in zip(vals, vals[1:] + vals[:1]))


def lemma7_map(system: Lemma7Extension, p: Lemma7Point) -> Lemma7Point:
    system.validate(p)
    if not system.contains(p):
        raise ValueError("point does not lie on the extension")
    return system.step(p)


CATALOG = [
    ("full-shift:2", "full shift on two symbols", {"weakly_mixing": True, "minimal": False, "distal": False}),
    ("chacon", "Chacon substitution subshift", {"weakly_mixing": True, "minimal": True, "distal": False}),
    ("rotation:0.41421356", "irrational circle rotation", {"weakly_mixing": False, "minimal": True, "distal": True}),
    ("odometer:2*32", "dyadic odometer (adding machine)", {"weakly_mixing": False, "minimal": True, "distal": True}),
    ("lemma7:k=3", "extension-example: k-to-1 circle extension, not a skew product",
     {"weakly_mixing": False, "minimal": False, "distal": True}),
]


def _kv(text: str) -> dict[str, str]:
    out = {}
    for part in text.split(","):
        if part.strip():
            key, _, value = part.partition("=")
            out[key.strip()] = value.strip()
    return out


def make_system(identifier: str) -> System:
    """Build a system from a catalog identifier such as ``"rotation:0.41421356"``."""
    name, _, arg = identifier.strip().partition(":")
    try:
        if name == "full-shift":
            return FullShift(int(arg or 2))
        if name == "chacon":
            return ChaconSubshift(int(_kv(arg).get("levels", 13)))
        if name == "rotation":
            return IrrationalRotation(float(arg) if arg else DEFAULT_ALPHA)
        if name == "odometer":
            return Odometer(parse_bases(arg) if arg else (2,) * 32)
        if name == "lemma7":
            kv = _kv(arg)
            beta = float(kv["beta"]) if "beta" in kv else 2.0 - math.sqrt(2.0)
            return Lemma7Extension(int(kv.get("k", 3)), beta)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad system identifier {identifier!r}: {exc}") from None
    raise ValueError(f"unknown system {identifier!r}")
