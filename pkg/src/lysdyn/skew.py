"""Skew products over a base system: finite permutation cocycles and odometer fibers.

Permutations are tuples in one-line image notation: ``p[i]`` is the image
of label ``i``. ``compose(p, q)`` is ``p o q`` (apply ``q`` first).
"""
from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cells import ARC_TOLERANCE, ArcCell, CylinderCell, cell_from_json
from .core import (
    CircleAngle,
    DepthExhausted,
    FiberedPoint,
    KindMismatch,
    OdometerDigits,
    PoisonedPoint,
    ProductPoint,
    SymbolicWord,
    System,
    UndecidableCell,
)
from .systems import odometer_advance, odometer_step, parse_bases

Perm = tuple


def identity(m: int) -> Perm:
    return tuple(range(m))


def is_permutation(p, m: int | None = None) -> bool:
    m = len(p) if m is None else m
    return len(p) == m and sorted(p) == list(range(m))


def compose(p: Perm, q: Perm) -> Perm:
    return tuple(p[i] for i in q)


def inverse(p: Perm) -> Perm:
    out = [0] * len(p)
    for i, v in enumerate(p):
        out[v] = i
    return tuple(out)


def perm_power(p: Perm, n: int) -> Perm:
    if n < 0:
        p, n = inverse(p), -n
    out = identity(len(p))
    for _ in range(n):
        out = compose(p, out)
    return out


def parse_perm(text: str) -> Perm:
    """``"102"`` or ``"1,0,2"`` to ``(1, 0, 2)``."""
    text = str(text).strip()
    if "," in text:
        perm = tuple(int(s) for s in text.split(","))
    else:
        perm = tuple(int(c, 36) for c in text)
    if not is_permutation(perm):
        raise ValueError(f"{text!r} is not a permutation")
    return perm


def format_perm(p: Perm) -> str:
    if len(p) <= 10:
        return "".join(map(str, p))
    return ",".join(map(str, p))


@dataclass(frozen=True)
class CocycleElement:
    """Pair ``(g, h)`` of fiber permutations accumulated along two orbits."""

    g: Perm
    h: Perm

    def __matmul__(self, other: CocycleElement) -> CocycleElement:
        return CocycleElement(compose(self.g, other.g), compose(self.h, other.h))

    def inverse(self) -> CocycleElement:
        return CocycleElement(inverse(self.g), inverse(self.h))

    def is_identity(self) -> bool:
        return self.g == identity(len(self.g)) and self.h == identity(len(self.h))

    @classmethod
    def identity(cls, m: int) -> CocycleElement:
        return cls(identity(m), identity(m))

    def to_json(self):
        return [format_perm(self.g), format_perm(self.h)]

    def sort_key(self):
        return (self.g, self.h)


class _Partition:
    """Cell lookup for a finite clopen partition of a base space."""

    def __init__(self, cells: Sequence, alphabet_size: int | None = None):
        cells = tuple(cells)
        if not cells:
            raise ValueError("a partition needs at least one cell")
        self.cells = cells
        if all(isinstance(c, CylinderCell) for c in cells):
            widths = {len(c) for c in cells}
            if len(widths) != 1:
                raise ValueError("cylinder cells must share one window length")
            self.kind = "word"
            self.window = widths.pop()
            self.index = {}
            for i, c in enumerate(cells):
                if c.word in self.index:
                    raise ValueError(f"cell {c.label()} listed twice")
                self.index[c.word] = i
            if alphabet_size is not None:
                expected = alphabet_size ** self.window
                if len(self.index) != expected or any(s >= alphabet_size for w in self.index for s in w):
                    raise ValueError(f"cells must cover all {expected} words of length {self.window}")
            self.alphabet_size = alphabet_size
        elif all(isinstance(c, ArcCell) for c in cells):
            self.kind = "arc"
            order = sorted(range(len(cells)), key=lambda i: cells[i].lo)
            self.order = order
            self.los = [cells[i].lo for i in order]
            total = sum(c.length for c in cells)
            if abs(total - 1.0) > 1e-12:
                raise ValueError("arcs must cover the circle exactly once")
            for a, b in zip(order, order[1:] + order[:1]):
                if abs(((cells[a].lo + cells[a].length) - cells[b].lo + 0.5) % 1.0 - 0.5) > 1e-12:
                    raise ValueError("arcs must be contiguous")
        else:
            raise ValueError("cells must be all cylinders or all arcs")

    def locate(self, p) -> int:
        if self.kind == "word":
            if isinstance(p, SymbolicWord):
                try:
                    key = tuple(p.prefix(self.window))
                except DepthExhausted:
                    raise UndecidableCell(f"cell window {self.window} exceeds point depth {p.depth}") from None
            elif isinstance(p, OdometerDigits):
                if self.window > len(p.digits):
                    raise UndecidableCell("cell window exceeds the stored odometer digits")
                key = p.digits[:self.window]
            else:
                raise KindMismatch(f"cylinder cells do not apply to {type(p).__name__}")
            try:
                return self.index[key]
            except KeyError:
                raise UndecidableCell(f"no cell for word {key}") from None
        if not isinstance(p, CircleAngle):
            raise KindMismatch(f"arc cells do not apply to {type(p).__name__}")
        v = p.value
        for lo in self.los:
            d = abs(v - lo)
            if min(d, 1.0 - d) < ARC_TOLERANCE:
                raise UndecidableCell(f"{v!r} is within {ARC_TOLERANCE} of a cell boundary")
        pos = bisect.bisect_right(self.los, v) - 1
        return self.order[pos]

    def locate_orbit(self, base: System, x, n: int) -> list[int]:
        """Cell indices of ``x, Tx, ..., T^{n-1} x``."""
        if self.kind == "word" and isinstance(x, SymbolicWord):
            w = self.window
            if x.depth < n + w - 1:
                raise UndecidableCell(f"{n} steps with window {w} need depth {n + w - 1}, point has {x.depth}")
            if n == 0:
                return []
            arr = x.array(n + w - 1).astype(np.int64)
            a = x.alphabet_size
            codes = np.zeros(n, dtype=np.int64)
            for i in range(w):
                codes = codes * a + arr[i:i + n]
            lookup = {}
            for word, idx in self.index.items():
                code = 0
                for s in word:
                    code = code * a + s
                lookup[code] = idx
            try:
                return [lookup[c] for c in codes.tolist()]
            except KeyError as exc:
                raise UndecidableCell(f"no cell for code {exc.args[0]}") from None
        out = []
        for _ in range(n):
            out.append(self.locate(x))
            x = base.step(x)
        return out

    def cells_json(self):
        return [c.to_json() for c in self.cells]


@dataclass(frozen=True, eq=False)
class FiniteCocycle:
    """Fiber permutations constant on the cells of a clopen partition."""

    fiber_size: int
    cells: tuple
    perms: tuple
    alphabet_size: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "perms", tuple(tuple(int(v) for v in p) for p in self.perms))
        if len(self.cells) != len(self.perms):
            raise ValueError("one permutation per cell is required")
        for p in self.perms:
            if not is_permutation(p, self.fiber_size):
                raise ValueError(f"{p} is not a bijection of {{0..{self.fiber_size - 1}}}")
        object.__setattr__(self, "_partition", _Partition(self.cells, self.alphabet_size))

    @classmethod
    def from_words(cls, fiber_size: int, table: dict, alphabet_size: int, window: int = 1, default=None):
        """Cocycle over a shift from ``{word: perm}``; missing words get ``default`` (identity if None)."""
        table = {tuple(CylinderCell.parse(k).word) if isinstance(k, str) else tuple(k): v for k, v in table.items()}
        cells, perms = [], []
        for word in itertools.product(range(alphabet_size), repeat=window):
            if word in table:
                perm = table.pop(word)
            else:
                perm = identity(fiber_size) if default is None else default
            cells.append(CylinderCell(word))
            perms.append(parse_perm(perm) if isinstance(perm, str) else tuple(perm))
        if table:
            raise ValueError(f"cells outside the alphabet: {sorted(table)}")
        return cls(fiber_size, tuple(cells), tuple(perms), alphabet_size)

    @classmethod
    def swap_on(cls, symbol: int = 1, alphabet_size: int = 2) -> FiniteCocycle:
        """Two-point fiber, swapped exactly when the current symbol is ``symbol``."""
        return cls.from_words(2, {(symbol,): (1, 0)}, alphabet_size, default=(0, 1))

    @classmethod
    def constant(cls, perm, alphabet_size: int = 2) -> FiniteCocycle:
        perm = parse_perm(perm) if isinstance(perm, str) else tuple(perm)
        return cls.from_words(len(perm), {}, alphabet_size, default=perm)

    @classmethod
    def identity(cls, fiber_size: int, alphabet_size: int = 2) -> FiniteCocycle:
        return cls.constant(identity(fiber_size), alphabet_size)

    @property
    def window(self) -> int | None:
        return getattr(self._partition, "window", None)

    def cell_index(self, p) -> int:
        return self._partition.locate(p)

    def perm_at(self, p) -> Perm:
        return self.perms[self._partition.locate(p)]

    def to_json(self):
        return {
            "fiber_size": self.fiber_size,
            "cells": self._partition.cells_json(),
            "perms": [format_perm(p) for p in self.perms],
        }


def cocycle_sequence(cocycle: FiniteCocycle, base: System, x, n: int) -> list[Perm]:
    """``[g_0, g_1, ..., g_n]`` with ``g_0 = Id`` and ``g_{i+1} = G_{T^i x} o g_i``."""
    cells = cocycle._partition.locate_orbit(base, x, n)
    g = identity(cocycle.fiber_size)
    out = [g]
    memo: dict[tuple[int, Perm], Perm] = {}
    perms = cocycle.perms
    for c in cells:
        key = (c, g)
        nxt = memo.get(key)
        if nxt is None:
            nxt = memo[key] = compose(perms[c], g)
        g = nxt
        out.append(g)
    return out


def cocycle_compose(cocycle: FiniteCocycle, base: System, x, i: int) -> Perm:
    """The composed permutation ``g_i(x)`` along the first ``i`` base steps."""
    if i < 0:
        raise ValueError("i must be non-negative")
    return cocycle_sequence(cocycle, base, x, i)[-1]


def generated_group(perms, m: int) -> set[Perm]:
    """All products of the given permutations (closure by breadth-first search)."""
    gens = {tuple(p) for p in perms} or {identity(m)}
    group = {identity(m)}
    frontier = [identity(m)]
    while frontier:
        nxt = []
        for g in frontier:
            for s in gens:
                h = compose(s, g)
                if h not in group:
                    group.add(h)
                    nxt.append(h)
        frontier = nxt
    return group


def minimal_fiber_orbits(cocycle: FiniteCocycle) -> list[frozenset[int]]:
    """Orbits of the generated group on fiber labels, ordered by smallest label.

    Each orbit ``B`` is a candidate fiber of a minimal set ``X x B``.
    """
    group = generated_group(cocycle.perms, cocycle.fiber_size)
    seen: set[int] = set()
    orbits = []
    for v in range(cocycle.fiber_size):
        if v in seen:
            continue
        orb = frozenset(g[v] for g in group)
        seen |= orb
        orbits.append(orb)
    return orbits


class ProductSystem(System):
    """``(T x S)(p, q) = (Tp, Sq)`` with the max-metric."""

    def __init__(self, left: System, right: System):
        self.left, self.right = left, right
        self.identifier = f"{left.identifier}*{right.identifier}"
        self.symbolic = left.symbolic and right.symbolic

    def validate(self, p):
        if not isinstance(p, ProductPoint):
            raise KindMismatch("product systems act on ProductPoint points")
        self.left.validate(p.left)
        self.right.validate(p.right)

    def step(self, p):
        return ProductPoint(self.left.step(p.left), self.right.step(p.right))

    def iterate(self, p, n):
        return ProductPoint(self.left.iterate(p.left, n), self.right.iterate(p.right, n))

    def pair_orbit_distances(self, x, y, n):
        return np.maximum(self.left.pair_orbit_distances(x.left, y.left, n),
                          self.right.pair_orbit_distances(x.right, y.right, n))

    def sample(self, rng, depth=None):
        return ProductPoint(self.left.sample(rng, depth), self.right.sample(rng, depth))

    def sample_near(self, x, radius, rng, depth=None):
        return ProductPoint(self.left.sample_near(x.left, radius, rng, depth),
                            self.right.sample_near(x.right, radius, rng, depth))


class SkewProduct(System):
    """``S(t, a) = (T t, G_t(a))`` over a base system with a finite fiber."""

    def __init__(self, base: System, cocycle: FiniteCocycle):
        self.base = base
        self.cocycle = cocycle
        self.fiber_size = cocycle.fiber_size
        self.identifier = f"{base.identifier}/cocycle{cocycle.fiber_size}"
        self.symbolic = base.symbolic

    def validate(self, p):
        if not isinstance(p, FiberedPoint):
            raise KindMismatch("skew products act on FiberedPoint points")
        if not 0 <= p.label < self.fiber_size:
            raise ValueError(f"label {p.label} outside the fiber of size {self.fiber_size}")
        self.base.validate(p.base)

    def project(self, p: FiberedPoint):
        return p.base

    def step(self, p: FiberedPoint) -> FiberedPoint:
        perm = self.cocycle.perm_at(p.base)
        return FiberedPoint(self.base.step(p.base), perm[p.label])

    def labels(self, p: FiberedPoint, n: int) -> list[int]:
        """Fiber labels along ``p, Sp, ..., S^n p``."""
        cells = self.cocycle._partition.locate_orbit(self.base, p.base, n)
        perms = self.cocycle.perms
        out = [p.label]
        v = p.label
        for c in cells:
            v = perms[c][v]
            out.append(v)
        return out

    def iterate(self, p, n):
        return FiberedPoint(self.base.iterate(p.base, n), self.labels(p, n)[-1])

    def pair_orbit_distances(self, x, y, n):
        d = self.base.pair_orbit_distances(x.base, y.base, n)
        differ = np.array(self.labels(x, n)) != np.array(self.labels(y, n))
        return np.where(differ, 1.0, d)

    def sample(self, rng, depth=None):
        return FiberedPoint(self.base.sample(rng, depth), int(rng.integers(0, self.fiber_size)))

    def sample_near(self, x, radius, rng, depth=None):
        return FiberedPoint(self.base.sample_near(x.base, radius, rng, depth), x.label)

    def sample_in(self, cell, rng, depth=None):
        return FiberedPoint(self.base.sample_in(cell, rng, depth), int(rng.integers(0, self.fiber_size)))

    def net_cell(self, p, resolution):
        return (self.base.net_cell(p.base, resolution), p.label)

    def net_size(self, resolution):
        return self.base.net_size(resolution) * self.fiber_size


def skew_step(cocycle: FiniteCocycle, base: System, p: FiberedPoint) -> FiberedPoint:
    return SkewProduct(base, cocycle).step(p)


ODOMETER, IDENTITY = "odometer", "identity"


@dataclass(frozen=True, eq=False)
class OdometerFiberSelector:
    """Per-cell choice between one odometer step and the identity on the fiber."""

    cells: tuple
    choices: tuple
    alphabet_size: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "choices", tuple(self.choices))
        if len(self.cells) != len(self.choices):
            raise ValueError("one choice per cell is required")
        bad = set(self.choices) - {ODOMETER, IDENTITY}
        if bad:
            raise ValueError(f"unknown fiber choices {sorted(bad)}")
        object.__setattr__(self, "_partition", _Partition(self.cells, self.alphabet_size))

    @classmethod
    def from_words(cls, table: dict, alphabet_size: int, window: int = 1, default: str = IDENTITY):
        table = {tuple(CylinderCell.parse(k).word) if isinstance(k, str) else tuple(k): v for k, v in table.items()}
        cells, choices = [], []
        for word in itertools.product(range(alphabet_size), repeat=window):
            cells.append(CylinderCell(word))
            choices.append(table.pop(word, default))
        if table:
            raise ValueError(f"cells outside the alphabet: {sorted(table)}")
        return cls(tuple(cells), tuple(choices), alphabet_size)

    def choice_at(self, p) -> str:
        return self.choices[self._partition.locate(p)]

    def to_json(self):
        return {"cells": self._partition.cells_json(), "choices": list(self.choices)}


class OdometerSkew(System):
    """``S(x, y) = (T x, R_x y)`` where each ``R_x`` is the odometer or the identity."""

    def __init__(self, base: System, selector: OdometerFiberSelector, bases=(2,) * 32):
        self.base = base
        self.selector = selector
        self.bases = tuple(bases)
        self.identifier = f"{base.identifier}/odometer-fiber"
        self.symbolic = base.symbolic

    def validate(self, p):
        if not isinstance(p, ProductPoint) or not isinstance(p.right, OdometerDigits):
            raise KindMismatch("odometer skew products act on ProductPoint(base, OdometerDigits)")
        if p.right.bases != self.bases:
            raise KindMismatch("fiber has different bases")
        self.base.validate(p.left)

    def project(self, p):
        return p.left

    def step(self, p):
        fiber = odometer_step(p.right) if self.selector.choice_at(p.left) == ODOMETER else p.right
        if fiber.overflow:
            raise PoisonedPoint("odometer fiber overflowed its stored digits")
        return ProductPoint(self.base.step(p.left), fiber)

    def odometer_counts(self, x, n: int) -> list[int]:
        """Number of odometer cells among ``x, ..., T^{i-1} x`` for ``i = 0..n``."""
        cells = self.selector._partition.locate_orbit(self.base, x, n)
        out, c = [0], 0
        for idx in cells:
            c += self.selector.choices[idx] == ODOMETER
            out.append(c)
        return out

    def iterate(self, p, n):
        fiber = odometer_advance(p.right, self.odometer_counts(p.left, n)[-1])
        if fiber.overflow:
            raise PoisonedPoint("odometer fiber overflowed its stored digits")
        return ProductPoint(self.base.iterate(p.left, n), fiber)

    def sample(self, rng, depth=None):
        fiber = OdometerDigits(self.bases, [int(rng.integers(0, b)) for b in self.bases])
        return ProductPoint(self.base.sample(rng, depth), fiber)

    def sample_near(self, x, radius, rng, depth=None):
        return ProductPoint(self.base.sample_near(x.left, radius, rng, depth), x.right)


def odometer_fiber_step(selector: OdometerFiberSelector, base: System, p: ProductPoint) -> ProductPoint:
    return OdometerSkew(base, selector, p.right.bases).step(p)


def _load_toml(path):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def cocycle_from_dict(table: dict) -> FiniteCocycle:
    """Build a cocycle from a descriptor table (see README for the format)."""
    allowed = {"kind", "fiber_size", "window", "alphabet_size", "default", "cells", "arcs"}
    unknown = set(table) - allowed
    if unknown:
        raise ValueError(f"unknown cocycle fields: {sorted(unknown)}")
    m = int(table["fiber_size"])
    if "arcs" in table:
        cells, perms = [], []
        for arc in table["arcs"]:
            cells.append(cell_from_json({k: v for k, v in arc.items() if k != "perm"}))
            perms.append(parse_perm(arc["perm"]))
        return FiniteCocycle(m, tuple(cells), tuple(perms))
    default = table.get("default")
    return FiniteCocycle.from_words(
        m,
        {k: parse_perm(v) for k, v in table.get("cells", {}).items()},
        int(table.get("alphabet_size", 2)),
        int(table.get("window", 1)),
        None if default is None else parse_perm(default),
    )


def selector_from_dict(table: dict) -> tuple[OdometerFiberSelector, tuple[int, ...]]:
    allowed = {"kind", "window", "alphabet_size", "default", "cells", "bases"}
    unknown = set(table) - allowed
    if unknown:
        raise ValueError(f"unknown selector fields: {sorted(unknown)}")
    bases = table.get("bases", "2*32")
    bases = parse_bases(bases) if isinstance(bases, str) else tuple(int(b) for b in bases)
    selector = OdometerFiberSelector.from_words(
        dict(table.get("cells", {})),
        int(table.get("alphabet_size", 2)),
        int(table.get("window", 1)),
        table.get("default", IDENTITY),
    )
    return selector, bases


def load_cocycle(path) -> FiniteCocycle:
    return cocycle_from_dict(_load_toml(Path(path)))


def load_selector(path):
    return selector_from_dict(_load_toml(Path(path)))
