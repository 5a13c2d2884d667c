import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lysdyn.cells import ArcCell, CylinderCell
from lysdyn.core import (
    CircleAngle,
    FiberedPoint,
    OdometerDigits,
    PoisonedPoint,
    ProductPoint,
    SymbolicWord,
    UndecidableCell,
    distance,
)
from lysdyn.skew import (
    IDENTITY,
    ODOMETER,
    CocycleElement,
    FiniteCocycle,
    OdometerFiberSelector,
    OdometerSkew,
    ProductSystem,
    SkewProduct,
    cocycle_compose,
    cocycle_from_dict,
    cocycle_sequence,
    compose,
    generated_group,
    identity,
    inverse,
    load_cocycle,
    minimal_fiber_orbits,
    odometer_fiber_step,
    parse_perm,
    perm_power,
    selector_from_dict,
    skew_step,
)
from lysdyn.systems import FullShift, IrrationalRotation, Odometer, odometer_advance

FS = FullShift(2)
perms3 = st.permutations(range(3)).map(tuple)


def word(text):
    return SymbolicWord.from_digits(text)


# -- permutations


def test_parse_and_compose():
    assert parse_perm("102") == (1, 0, 2)
    assert parse_perm("1,0,2") == (1, 0, 2)
    with pytest.raises(ValueError):
        parse_perm("112")
    # compose(p, q) applies q first
    assert compose((1, 2, 0), (1, 0, 2)) == (2, 1, 0)


@given(perms3, perms3, perms3)
def test_composition_is_associative(p, q, r):
    assert compose(compose(p, q), r) == compose(p, compose(q, r))
    assert compose(p, inverse(p)) == identity(3)


@given(perms3, perms3, perms3, perms3)
def test_cocycle_element_group_laws(a, b, c, d):
    e, f = CocycleElement(a, b), CocycleElement(c, d)
    assert ((e @ f) @ e) == (e @ (f @ e))
    assert (e @ e.inverse()).is_identity()
    assert (CocycleElement.identity(3) @ f) == f


# -- cocycle validation


def test_rejects_non_bijective_table():
    with pytest.raises(ValueError):
        FiniteCocycle(2, (CylinderCell((0,)), CylinderCell((1,))), ((0, 0), (1, 0)))


def test_rejects_incomplete_partition():
    with pytest.raises(ValueError):
        FiniteCocycle(2, (CylinderCell((0,)),), ((1, 0),), alphabet_size=2)
    with pytest.raises(ValueError):
        FiniteCocycle(2, (CylinderCell((0,)), CylinderCell((1, 0))), ((1, 0), (0, 1)))


def test_arc_partition_must_cover_circle():
    with pytest.raises(ValueError):
        FiniteCocycle(2, (ArcCell(0.0, 0.5), ArcCell(0.6, 0.4)), ((1, 0), (0, 1)))
    ok = FiniteCocycle(2, (ArcCell(0.0, 0.5), ArcCell(0.5, 0.5)), ((1, 0), (0, 1)))
    assert ok.perm_at(CircleAngle(0.25)) == (1, 0)
    with pytest.raises(UndecidableCell):
        ok.perm_at(CircleAngle(0.5 + 1e-12))


def test_cocycle_descriptor():
    c = cocycle_from_dict({"fiber_size": 3, "window": 2, "cells": {"11": "102", "01": "021"}})
    assert c.perm_at(word("110")) == (1, 0, 2)
    assert c.perm_at(word("011")) == (0, 2, 1)
    assert c.perm_at(word("000")) == (0, 1, 2)
    with pytest.raises(ValueError):
        cocycle_from_dict({"fiber_size": 2, "colour": "red"})
    arcs = cocycle_from_dict({"fiber_size": 2, "arcs": [{"lo": 0.0, "hi": 0.3, "perm": "10"},
                                                         {"lo": 0.3, "hi": 0.0, "perm": "01"}]})
    assert arcs.perm_at(CircleAngle(0.1)) == (1, 0)


def test_load_cocycle(tmp_path):
    path = tmp_path / "swap.toml"
    path.write_text('fiber_size = 2\nwindow = 1\n[cells]\n"1" = "10"\n')
    c = load_cocycle(path)
    assert c.perm_at(word("1")) == (1, 0)
    assert c.perm_at(word("0")) == (0, 1)


# -- skew step


def test_identity_cocycle_keeps_label():
    skew = SkewProduct(FS, FiniteCocycle.identity(3))
    p = FiberedPoint(FS.sample(np.random.default_rng(0), 100), 2)
    assert skew.labels(p, 50) == [2] * 51


def test_swap_on_one_single_application():
    c = FiniteCocycle.swap_on(1)
    assert skew_step(c, FS, FiberedPoint(word("1001"), 0)).label == 1
    assert skew_step(c, FS, FiberedPoint(word("0001"), 0)).label == 0


def test_skew_step_needs_decidable_cell():
    c = FiniteCocycle.from_words(2, {"11": (1, 0)}, 2, window=2)
    with pytest.raises(UndecidableCell):
        skew_step(c, FS, FiberedPoint(word("1"), 0))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_factor_commutation_symbolic(seed):
    rng = np.random.default_rng(seed)
    skew = SkewProduct(FS, FiniteCocycle.from_words(3, {"01": (1, 2, 0), "10": (0, 2, 1)}, 2, window=2))
    p = skew.sample(rng, 80)
    for _ in range(20):
        q = skew.step(p)
        assert q.base == FS.step(p.base)
        p = q


def test_factor_commutation_circle():
    rot = IrrationalRotation()
    c = FiniteCocycle(2, (ArcCell(0.0, 0.3), ArcCell(0.3, 0.7)), ((1, 0), (0, 1)))
    skew = SkewProduct(rot, c)
    rng = np.random.default_rng(5)
    for _ in range(200):
        p = FiberedPoint(rot.sample(rng), int(rng.integers(0, 2)))
        assert distance(skew.step(p).base, rot.step(p.base)) < 1e-9


def test_iterate_matches_steps():
    skew = SkewProduct(FS, FiniteCocycle.swap_on(1))
    p = skew.sample(np.random.default_rng(1), 200)
    q = p
    for _ in range(100):
        q = skew.step(q)
    assert skew.iterate(p, 100) == q


# -- cocycle composition


def test_compose_zero_is_identity():
    assert cocycle_compose(FiniteCocycle.swap_on(1), FS, word("1111"), 0) == (0, 1)


def test_constant_cocycle_is_power():
    sigma = (1, 2, 0)
    c = FiniteCocycle.constant(sigma)
    x = FS.sample(np.random.default_rng(2), 50)
    for i in range(10):
        assert cocycle_compose(c, FS, x, i) == perm_power(sigma, i)


COCYCLES = [
    FiniteCocycle.swap_on(1),
    FiniteCocycle.from_words(3, {"0": (1, 2, 0), "1": (1, 0, 2)}, 2),
    FiniteCocycle.from_words(4, {"00": (1, 0, 2, 3), "01": (0, 2, 3, 1), "11": (3, 2, 1, 0)}, 2, window=2),
]


@settings(max_examples=40)
@given(st.sampled_from(range(3)), st.integers(0, 2**32 - 1), st.integers(0, 100), st.integers(0, 100))
def test_cocycle_law(which, seed, i, j):
    c = COCYCLES[which]
    x = FS.sample(np.random.default_rng(seed), 260)
    lhs = cocycle_compose(c, FS, x, i + j)
    rhs = compose(cocycle_compose(c, FS, FS.iterate(x, i), j), cocycle_compose(c, FS, x, i))
    assert lhs == rhs


def test_sequence_matches_stepwise_labels():
    c = COCYCLES[2]
    skew = SkewProduct(FS, c)
    x = FS.sample(np.random.default_rng(9), 120)
    seq = cocycle_sequence(c, FS, x, 60)
    for a in range(4):
        assert skew.labels(FiberedPoint(x, a), 60) == [g[a] for g in seq]


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_fiber_count_conservation(seed):
    skew = SkewProduct(FS, COCYCLES[2])
    x = FS.sample(np.random.default_rng(seed), 100)
    traces = [skew.labels(FiberedPoint(x, a), 40) for a in range(4)]
    for t in zip(*traces):
        assert len(set(t)) == 4


# -- minimal fiber orbits


def test_minimal_orbits_examples():
    assert minimal_fiber_orbits(FiniteCocycle.identity(3)) == [frozenset({0}), frozenset({1}), frozenset({2})]
    assert minimal_fiber_orbits(FiniteCocycle.swap_on(1)) == [frozenset({0, 1})]
    full = FiniteCocycle.from_words(3, {"0": (1, 0, 2), "1": (1, 2, 0)}, 2)
    assert minimal_fiber_orbits(full) == [frozenset({0, 1, 2})]
    assert len(generated_group(full.perms, 3)) == 6


@settings(max_examples=30)
@given(st.lists(st.permutations(range(5)).map(tuple), min_size=1, max_size=3))
def test_minimal_orbits_partition_and_invariance(perms):
    cells = tuple(CylinderCell(w) for w in [(0, 0), (0, 1), (1, 0), (1, 1)])
    table = (list(perms) * 4)[:4]
    c = FiniteCocycle(5, cells, tuple(table), alphabet_size=2)
    orbits = minimal_fiber_orbits(c)
    assert sorted(v for o in orbits for v in o) == list(range(5))
    for o in orbits:
        for p in c.perms:
            assert {p[v] for v in o} == set(o)


# -- odometer fibers


def _fiber(n=16):
    return OdometerDigits((2,) * n, (0,) * n)


def test_identity_selector_freezes_fiber():
    sel = OdometerFiberSelector.from_words({}, 2)
    p = ProductPoint(FS.sample(np.random.default_rng(0), 50), _fiber())
    for _ in range(20):
        p = odometer_fiber_step(sel, FS, p)
    assert p.right == _fiber()


def test_all_odometer_selector_matches_plain_odometer():
    sel = OdometerFiberSelector.from_words({}, 2, default=ODOMETER)
    od = Odometer((2,) * 16)
    p = ProductPoint(FS.sample(np.random.default_rng(0), 60), _fiber())
    y = p.right
    for _ in range(40):
        p = odometer_fiber_step(sel, FS, p)
        y = od.step(y)
        assert p.right == y


def test_mixed_selector_counts_visits():
    sel = OdometerFiberSelector.from_words({"1": ODOMETER}, 2)
    skew = OdometerSkew(FS, sel, (2,) * 16)
    x = FS.sample(np.random.default_rng(4), 200)
    p = ProductPoint(x, _fiber())
    n = 150
    visits = x.prefix(n).count(1)
    assert skew.iterate(p, n).right == odometer_advance(_fiber(), visits)
    q = p
    for _ in range(n):
        q = skew.step(q)
    assert q == skew.iterate(p, n)


def test_odometer_fiber_overflow_is_an_error():
    sel = OdometerFiberSelector.from_words({}, 2, default=ODOMETER)
    p = ProductPoint(word("0000"), OdometerDigits((2, 2), (1, 1)))
    with pytest.raises(PoisonedPoint):
        odometer_fiber_step(sel, FS, p)


def test_selector_descriptor():
    sel, bases = selector_from_dict({"bases": "3*4", "cells": {"1": "odometer"}})
    assert bases == (3, 3, 3, 3)
    assert sel.choice_at(word("10")) == ODOMETER
    assert sel.choice_at(word("01")) == IDENTITY
    with pytest.raises(ValueError):
        selector_from_dict({"cells": {"1": "flip"}})


def test_product_system():
    prod = ProductSystem(FS, IrrationalRotation())
    p = ProductPoint(word("0110"), CircleAngle(0.1))
    q = prod.step(p)
    assert q.left.to_str() == "110"
    d = prod.pair_orbit_distances(p, ProductPoint(word("0100"), CircleAngle(0.2)), 2)
    assert d.tolist() == pytest.approx([0.25, 0.5, 1.0])
