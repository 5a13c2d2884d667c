import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lysdyn.cells import ArcCell, CylinderCell
from lysdyn.core import CircleAngle, DepthExhausted, OdometerDigits, PoisonedPoint, SymbolicWord, distance
from lysdyn.systems import (
    CATALOG,
    ChaconSubshift,
    FullShift,
    IrrationalRotation,
    Lemma7Extension,
    Odometer,
    chacon_length,
    chacon_point,
    chacon_prefix,
    doubling_gap_word,
    first_disagreement_many,
    keep_for_radius,
    lemma7_map,
    make_system,
    odometer_advance,
    odometer_advance_many,
    odometer_return_period,
    odometer_step,
    parse_bases,
)

# -- odometer


def test_odometer_step_examples():
    assert odometer_step(OdometerDigits((2, 2, 2), (0, 0, 0))).digits == (1, 0, 0)
    assert odometer_step(OdometerDigits((2, 3, 5), (1, 0, 2))).digits == (0, 1, 2)
    full = odometer_step(OdometerDigits((2, 2, 2), (1, 1, 1)))
    assert full.digits == (0, 0, 0) and full.overflow


def test_odometer_step_rejects_poisoned():
    with pytest.raises(PoisonedPoint):
        odometer_step(OdometerDigits((2, 2), (0, 0), overflow=True))


@settings(max_examples=50)
@given(st.tuples(*[st.integers(0, b - 1) for b in (2, 3, 5, 2, 7, 2, 2, 2)]), st.integers(0, 300))
def test_advance_matches_repeated_steps(digits, n):
    d = OdometerDigits((2, 3, 5, 2, 7, 2, 2, 2), digits)
    stepped = d
    for _ in range(n):
        stepped = odometer_step(stepped)
        if stepped.overflow:
            break
    fast = odometer_advance(d, n)
    assert fast.overflow == stepped.overflow
    if not fast.overflow:
        assert fast == stepped


def test_advance_many_matches_scalar():
    bases = (2, 3, 2, 5, 2, 2)
    rng = np.random.default_rng(0)
    arr = np.stack([rng.integers(0, b, 40) for b in bases], axis=1)
    out, over = odometer_advance_many(arr, bases, 37)
    for row, o, v in zip(arr, out, over):
        ref = odometer_advance(OdometerDigits(bases, row), 37)
        assert ref.overflow == bool(v)
        if not v:
            assert tuple(o) == ref.digits


def test_first_disagreement_many():
    a = np.array([[0, 1, 1], [1, 1, 1], [0, 0, 0]])
    b = np.array([[0, 0, 1], [0, 1, 1], [0, 0, 0]])
    assert first_disagreement_many(a, b).tolist() == [2, 1, 0]


def _period_holds(bases, delta, m, ks=(1, 2, 3)):
    """Brute force: tau^(k m) moves no point of the first digits by delta or more."""
    J = len(bases)
    ext = bases + (2,) * 8
    for digits in itertools.product(*[range(b) for b in bases]):
        y = OdometerDigits(bases, digits)
        for k in ks:
            z = odometer_advance(OdometerDigits(ext, digits + (0,) * 8), k * m)
            if not distance(y, OdometerDigits(bases, z.digits[:J])) < delta:
                return False
    return True


def test_return_period_examples():
    assert odometer_return_period((2,) * 8, 0.3) == 4
    assert odometer_return_period((2, 3, 5, 7), 0.3) == 6
    assert odometer_return_period((3, 5), 2.0) == 1
    assert _period_holds((2, 2, 2, 2), 0.3, 4)
    assert _period_holds((2, 3, 2, 2), 0.3, 6)
    assert _period_holds((3, 5), 2.0, 1)


def test_return_period_is_conservative_by_one_digit():
    # with the 1-based metric, agreement on digit 1 already gives distance 1/4 < 0.3
    assert _period_holds((2, 2, 2, 2), 0.3, 2)
    assert not _period_holds((2, 2, 2, 2), 0.3, 1)


def test_return_period_too_deep():
    with pytest.raises(ValueError):
        odometer_return_period((2, 2), 2.0 ** -5)
    with pytest.raises(ValueError):
        odometer_return_period((2, 2), 0.0)


@pytest.mark.parametrize("bases", [(2, 2, 2, 2), (2, 3, 5), (3, 2, 4)])
def test_return_period_brute_force(bases):
    ext = bases + (2,) * 12
    for jp in range(1, len(bases) + 1):
        m = math.prod(bases[:jp])
        assert odometer_return_period(ext, 2.0 ** -jp + 1e-12) == m
        for digits in itertools.product(*[range(b) for b in bases]):
            y = OdometerDigits(ext, digits + (0,) * 12)
            for k in (1, 2, 3):
                z = odometer_advance(y, k * m)
                assert z.digits[:jp] == y.digits[:jp]


@pytest.mark.parametrize("bases", [(2, 2, 2), (2, 3, 5), (3, 3)])
def test_odometer_minimality_proxy(bases):
    m = math.prod(bases)
    d = OdometerDigits(bases + (2,) * 4, (0,) * (len(bases) + 4))
    seen = set()
    for _ in range(m):
        seen.add(d.digits[:len(bases)])
        d = odometer_step(d)
    assert len(seen) == m


def test_parse_bases():
    assert parse_bases("2*3,5") == (2, 2, 2, 5)
    assert parse_bases("2,3") == (2, 3)
    assert Odometer(parse_bases("2*32")).identifier == "odometer:2*32"


def test_odometer_hitting_witness():
    od = Odometer((2, 2, 2, 2))
    u = od.hitting_witness(CylinderCell((1,)), CylinderCell((0, 1)), 3)
    assert u.digits[0] == 1 and od.iterate(u, 3).digits[:2] == (0, 1)


# -- chacon


def test_chacon_prefix_examples():
    assert chacon_prefix(0) == "0"
    assert chacon_prefix(1) == "0010"
    assert chacon_prefix(2) == "0010001010010"


def test_chacon_length_law_and_prefix_property():
    for n in range(12):
        a, b = chacon_prefix(n), chacon_prefix(n + 1)
        assert len(b) == 3 * len(a) + 1 == chacon_length(n + 1)
        assert b.startswith(a)
        assert "11" not in b


def test_chacon_point_examples():
    assert chacon_point(4, 0).to_str() == "0010"
    assert chacon_point(1, 2).to_str() == "1"
    assert chacon_point(4, 4).to_str() == "0010"


def test_chacon_subshift_points():
    ch = ChaconSubshift(levels=6)
    assert ch.point(0, 13).to_str() == chacon_prefix(2)
    with pytest.raises(DepthExhausted):
        ch.point(len(ch.word) - 3, 10)
    rng = np.random.default_rng(3)
    x = ch.sample(rng, 50)
    y = ch.sample_near(x, 2.0 ** -5, rng, 50)
    assert distance(x, y) < 2.0 ** -5
    z = ch.sample_in(CylinderCell((1, 0, 0)), rng, 20)
    assert z.to_str(3) == "100"


def test_chacon_language_excludes_11():
    ch = ChaconSubshift(levels=8)
    assert ch.net_size(2) == 3


def test_chacon_hitting_witness_replays():
    ch = ChaconSubshift(levels=8)
    U, V = CylinderCell((0, 1)), CylinderCell((1,))
    for n in range(2, 30):
        u = ch.hitting_witness(U, V, n)
        if u is not None:
            assert U.contains(u) and V.contains(ch.iterate(u, n))


# -- full shift


def test_doubling_gap_word():
    assert doubling_gap_word(20) == bytes([1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1] + [0] * 8 + [1])


def test_keep_for_radius():
    assert keep_for_radius(2.0 ** -5) == 6
    assert keep_for_radius(0.3) == 2
    assert keep_for_radius(2.0) == 0


def test_full_shift_samplers_respect_radius():
    fs = FullShift(3)
    rng = np.random.default_rng(1)
    x = fs.sample(rng, 100)
    for r in (0.5, 2.0 ** -4, 2.0 ** -9):
        assert distance(x, fs.sample_near(x, r, rng)) < r
    assert CylinderCell((2, 0)).contains(fs.sample_in(CylinderCell((2, 0)), rng, 10))


def test_full_shift_hitting_witness_conflict():
    fs = FullShift(2)
    assert fs.hitting_witness(CylinderCell((0, 1)), CylinderCell((0,)), 1) is None
    u = fs.hitting_witness(CylinderCell((0, 1)), CylinderCell((1, 1)), 1)
    assert u.to_str() == "011"


def test_li_yorke_partner_keeps_prefix():
    fs = FullShift(2)
    x = fs.sample(np.random.default_rng(0), 200)
    y = fs.li_yorke_partner(x, 6)
    assert x.prefix(6) == y.prefix(6)
    assert x.symbol(6) != y.symbol(6)


# -- rotation


def test_rotation_samplers_and_net():
    r = IrrationalRotation()
    rng = np.random.default_rng(2)
    x = r.sample(rng)
    assert distance(x, r.sample_near(x, 0.01, rng)) < 0.01
    arc = ArcCell(0.9, 0.2)
    assert arc.contains(r.sample_in(arc, rng))
    assert r.net_cell(CircleAngle(0.74), 4) == 2


def test_rotation_hitting_witness():
    r = IrrationalRotation()
    U = V = ArcCell(0.0, 0.1)
    for n in range(0, 40):
        u = r.hitting_witness(U, V, n)
        s = (n * r.alpha) % 1.0
        overlap = min(s, 1 - s) < 0.1
        assert (u is not None) == overlap
        if u is not None:
            assert U.contains(u) and V.contains(r.iterate(u, n))


# -- circle extension


@pytest.mark.parametrize("k", [2, 3, 5])
def test_extension_factor_commutation(k):
    ext = Lemma7Extension(k)
    for p in ext.grid(600):
        q = lemma7_map(ext, p)
        _, s1 = ext.base_step(p.y0, p.y1)
        assert distance(q.y1, s1) < 1e-9
        assert ext.contains(q)


def test_extension_cases():
    ext = Lemma7Extension(3)
    # both in A: fiber unchanged
    assert ext.transport(0.1, 0.3) == 0.0
    # from B minus A into A: rotation by t(b) - t(y') = 1 - t(y')
    assert ext.transport(0.6, 0.2) == pytest.approx((1.0 - 0.8) / 3)
    # from A into B: rotation by t(S(y)')
    assert ext.transport(0.2, 0.9) == pytest.approx(0.2 / 3)
    # within B: difference of the sheet parameters
    assert ext.transport(0.9, 0.7) == pytest.approx((0.6 - 0.2) / 3)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_extension_monodromy(k):
    ext = Lemma7Extension(k)
    for loop in ([0.1, 0.3, 0.6, 0.8], [0.05, 0.45, 0.55, 0.7, 0.95], [0.2, 0.9]):
        turns = ext.monodromy(loop) * k
        assert abs(turns - round(turns)) < 1e-9
        assert round(turns) % k != 0


def test_extension_injective_on_grid():
    ext = Lemma7Extension(3)
    assert ext.injectivity_violations(ext.grid(3000)) == []


def test_extension_point_off_fiber_rejected():
    ext = Lemma7Extension(3)
    p = ext.point(0.2, 0)
    bad = type(p)(None, p.y1, CircleAngle(p.z.value + 0.1))
    with pytest.raises(ValueError):
        lemma7_map(ext, bad)


# -- catalog


def test_catalog_and_factory():
    idents = {c[0] for c in CATALOG}
    assert {"full-shift:2", "chacon", "rotation:0.41421356", "odometer:2*32", "lemma7:k=3"} <= idents
    props = {c[0]: c[2] for c in CATALOG}
    assert props["odometer:2*32"]["distal"]
    assert props["full-shift:2"]["weakly_mixing"] and not props["full-shift:2"]["minimal"]
    assert isinstance(make_system("full-shift:3"), FullShift)
    assert make_system("rotation:0.41421356").alpha == 0.41421356
    assert make_system("odometer:2,3,5").bases == (2, 3, 5)
    assert make_system("lemma7:k=5").k == 5
    assert isinstance(make_system("chacon:levels=6"), ChaconSubshift)
    with pytest.raises(ValueError):
        make_system("baker")
    with pytest.raises(ValueError):
        make_system("rotation:abc")
