"""Clopen cells: cylinders over words or odometer digits, and circle arcs."""
from __future__ import annotations

from dataclasses import dataclass

from .core import CircleAngle, DepthExhausted, KindMismatch, OdometerDigits, SymbolicWord, UndecidableCell

# Points closer than this to an arc endpoint are not classified.
ARC_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CylinderCell:
    """Points whose leading symbols (or leading odometer digits) equal ``word``."""

    word: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(int(s) for s in self.word))

    @classmethod
    def parse(cls, text: str) -> CylinderCell:
        text = text.strip()
        if "," in text:
            return cls(tuple(int(s) for s in text.split(",") if s))
        return cls(tuple(int(c, 36) for c in text))

    def __len__(self):
        return len(self.word)

    def contains(self, p) -> bool:
        n = len(self.word)
        if isinstance(p, SymbolicWord):
            try:
                return tuple(p.prefix(n)) == self.word
            except DepthExhausted:
                raise UndecidableCell(f"cell of length {n} needs depth {n}, point has {p.depth}") from None
        if isinstance(p, OdometerDigits):
            if n > len(p.digits):
                raise UndecidableCell(f"cell of length {n} on an odometer with {len(p.digits)} digits")
            return p.digits[:n] == self.word
        raise KindMismatch(f"cylinder cells do not apply to {type(p).__name__}")

    def label(self) -> str:
        if all(s < 10 for s in self.word):
            return "".join(map(str, self.word))
        return ",".join(map(str, self.word))

    def to_json(self):
        return {"word": self.label()}


@dataclass(frozen=True)
class ArcCell:
    """Half-open arc ``[lo, lo + length)`` of the circle, measured in turns."""

    lo: float
    length: float

    def __post_init__(self):
        if not 0.0 < self.length <= 1.0:
            raise ValueError("arc length must lie in (0, 1]")
        object.__setattr__(self, "lo", float(self.lo) % 1.0)
        object.__setattr__(self, "length", float(self.length))

    @classmethod
    def between(cls, lo: float, hi: float) -> ArcCell:
        """Arc running counter-clockwise from ``lo`` to ``hi``."""
        length = (hi - lo) % 1.0
        return cls(lo, 1.0 if length == 0.0 else length)

    @property
    def hi(self) -> float:
        return (self.lo + self.length) % 1.0

    def offset(self, v: float) -> float:
        """Position of ``v`` measured counter-clockwise from ``lo``, in [0, 1)."""
        return (v - self.lo) % 1.0

    def contains(self, p) -> bool:
        if not isinstance(p, CircleAngle):
            raise KindMismatch(f"arc cells do not apply to {type(p).__name__}")
        if self.length >= 1.0:
            return True
        t = self.offset(p.value)
        for edge in (0.0, self.length, 1.0):
            if abs(t - edge) < ARC_TOLERANCE:
                raise UndecidableCell(f"{p.value!r} is within {ARC_TOLERANCE} of an arc endpoint")
        return t < self.length

    def to_json(self):
        return {"lo": self.lo, "length": self.length}


def cell_from_json(obj):
    """Inverse of ``to_json`` for both cell kinds; strings and digit lists denote cylinders."""
    if isinstance(obj, str):
        return CylinderCell.parse(obj)
    if isinstance(obj, (list, tuple)):
        return CylinderCell(tuple(int(d) for d in obj))
    if "word" in obj:
        w = obj["word"]
        return CylinderCell(tuple(int(d) for d in w)) if isinstance(w, list) else CylinderCell.parse(str(w))
    if "length" in obj:
        return ArcCell(obj["lo"], obj["length"])
    if "hi" in obj:
        return ArcCell.between(obj["lo"], obj["hi"])
    raise ValueError(f"cannot read a cell from {obj!r}")
