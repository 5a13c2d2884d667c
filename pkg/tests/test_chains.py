import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lysdyn.analysis.chains import (
    ChainRecord,
    JoinNotFound,
    chain_join,
    characteristic_chain,
    claim2_test,
    claim3_test,
    recheck_indices,
)
from lysdyn.core import FiberedPoint, SymbolicWord, distance
from lysdyn.skew import CocycleElement, FiniteCocycle, SkewProduct, cocycle_compose, perm_power
from lysdyn.systems import FullShift

FS = FullShift(2)
SWAP = SkewProduct(FS, FiniteCocycle.swap_on(1))
IDENT = SkewProduct(FS, FiniteCocycle.identity(2))
SIGMA = (1, 2, 0)
CONST = SkewProduct(FS, FiniteCocycle.constant(SIGMA))


def close_pair(seed, radius=0.25, depth=10_064):
    rng = np.random.default_rng(seed)
    x = FS.sample(rng, depth)
    return x, FS.sample_near(x, radius, rng, depth)


# -- characteristic_chain


def test_diagonal_identity_cocycle():
    x, _ = close_pair(0, depth=564)
    rec = characteristic_chain(IDENT, x, x, 0.25, 500)
    assert rec.indices == list(range(501))
    assert rec.c_set == {CocycleElement.identity(2)}


def test_first_member_is_identity():
    x, y = close_pair(1)
    assert distance(x, y) < 0.25
    rec = characteristic_chain(SWAP, x, y, 0.25, 1000)
    assert rec.indices[0] == 0
    assert rec.elements[0] == CocycleElement.identity(2)


def test_fibered_points_are_projected():
    x, y = close_pair(2)
    a = characteristic_chain(SWAP, FiberedPoint(x, 1), FiberedPoint(y, 0), 0.25, 500)
    b = characteristic_chain(SWAP, x, y, 0.25, 500)
    assert a.indices == b.indices and a.c_set == b.c_set


def test_elements_match_direct_composition():
    x, y = close_pair(3)
    rec = characteristic_chain(SWAP, x, y, 0.125, 400)
    for i, e in list(zip(rec.indices, rec.elements))[:40]:
        assert e.g == cocycle_compose(SWAP.cocycle, FS, x, i)
        assert e.h == cocycle_compose(SWAP.cocycle, FS, y, i)


def test_swap_c_set_stabilizes():
    x, y = close_pair(4, depth=100_064)
    short = characteristic_chain(SWAP, x, y, 2.0 ** -3, 10_000)
    long = characteristic_chain(SWAP, x, y, 2.0 ** -3, 100_000)
    assert short.stabilized()
    assert long.c_set == short.c_set
    assert long.saturation_index == short.saturation_index


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_chain_soundness(seed):
    x, y = close_pair(seed, depth=2064)
    rec = characteristic_chain(SWAP, x, y, 2.0 ** -3, 2000)
    assert recheck_indices(FS, rec) == []
    assert all(a < b for a, b in zip(rec.indices, rec.indices[1:]))
    assert rec.c_set == set(rec.elements)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 4))
def test_chain_monotone_in_eta(seed, a, extra):
    x, y = close_pair(seed, depth=2064)
    small = characteristic_chain(SWAP, x, y, 2.0 ** -(a + extra), 2000)
    big = characteristic_chain(SWAP, x, y, 2.0 ** -a, 2000)
    assert set(small.indices) <= set(big.indices)
    assert small.c_set <= big.c_set


def test_chain_json():
    x, y = close_pair(5)
    rec = characteristic_chain(SWAP, x, y, 0.25, 300)
    out = rec.to_json(full=True)
    assert out["cardinality"] == rec.cardinality
    assert len(out["indices"]) == len(out["elements"]) == out["count"]
    with pytest.raises(ValueError):
        characteristic_chain(SWAP, x, y, 0.0, 10)


# -- chain_join


def test_join_with_itself_at_time_zero():
    x, y = close_pair(6)
    rec = characteristic_chain(SWAP, x, y, 0.25, 2000)
    join = chain_join(SWAP, rec, rec, start=0)
    assert join.time == 0
    assert join.connecting == CocycleElement.identity(2)
    assert join.contained and not join.missing


def test_join_cylinder_tracing_exhaustive():
    x, y = close_pair(7, depth=20_064)
    rec1 = characteristic_chain(SWAP, x, y, 0.25, 20_000)
    xp, yp = close_pair(8, radius=2.0 ** -4, depth=20_064)
    rec2 = characteristic_chain(SWAP, xp, yp, 2.0 ** -4, 20_000)
    join = chain_join(SWAP, rec1, rec2)
    n = join.time
    # the tracing condition holds at the reported time
    assert distance(FS.iterate(x, n), xp) < 2.0 ** -4
    assert distance(FS.iterate(y, n), yp) < 2.0 ** -4
    assert n >= rec1.saturation_index
    # exhaustive comparison of the two finite sets
    for e in rec2.c_set:
        assert (e @ join.connecting in rec1.c_set) == (e @ join.connecting not in join.missing)
    assert join.contained


def test_joined_chain_omits_elements():
    x, y = close_pair(9, depth=20_064)
    rec1 = characteristic_chain(SWAP, x, y, 2.0 ** -2, 20_000)
    rec2 = characteristic_chain(SWAP, x, y, 2.0 ** -4, 20_000)
    join = chain_join(SWAP, rec1, rec2)
    assert join.joined.cardinality <= rec1.cardinality


def test_join_requires_smaller_eta():
    x, y = close_pair(10)
    a = characteristic_chain(SWAP, x, y, 2.0 ** -4, 200)
    b = characteristic_chain(SWAP, x, y, 2.0 ** -2, 200)
    with pytest.raises(ValueError):
        chain_join(SWAP, a, b)


def test_join_not_found_is_reported():
    x = SymbolicWord(2, bytes(600))
    y = SymbolicWord(2, bytes(600))
    rec1 = characteristic_chain(SWAP, x, y, 0.5, 500)
    target = SymbolicWord.from_digits("1" * 64)
    rec2 = ChainRecord(0.25, 500, [], [], target, target)
    with pytest.raises(JoinNotFound):
        chain_join(SWAP, rec1, rec2)


# -- claim tests


def test_claim3_identity_cocycle():
    x, y = close_pair(11)
    res = claim3_test(IDENT, x, y, 0.25, 2.0 ** -5, 10_000)
    assert res.holds
    assert res.witness == CocycleElement.identity(2)


def test_claim3_constant_cocycle_witness_is_inverse_power():
    x, y = close_pair(12)
    res = claim3_test(CONST, x, y, 0.25, 2.0 ** -5, 10_000)
    assert res.holds
    r = res.time % 3
    assert res.connecting == CocycleElement(perm_power(SIGMA, r), perm_power(SIGMA, r))
    assert res.witness == CocycleElement(perm_power(SIGMA, -r), perm_power(SIGMA, -r))
    assert (res.witness @ res.connecting).is_identity()


@pytest.mark.parametrize("seed", range(3))
def test_claim3_swap_cocycle(seed):
    x, y = close_pair(100 + seed, depth=100_064)
    res = claim3_test(SWAP, x, y, 0.25, 2.0 ** -5, 100_000)
    assert res.holds
    assert (res.witness @ res.connecting).is_identity()


def test_claim3_requires_order():
    x, y = close_pair(13)
    with pytest.raises(ValueError):
        claim3_test(SWAP, x, y, 2.0 ** -5, 0.25, 100)


def test_claim2_identity_all_ones():
    pairs = [close_pair(s) for s in range(3)]
    rep = claim2_test(IDENT, pairs, [0.25, 2.0 ** -4], [5000])
    assert {r["cardinality"] for r in rep.rows} == {1}
    assert rep.consistent and rep.sound


def test_claim2_constant_cocycle_equal_cardinalities():
    pairs = [close_pair(s) for s in range(4)]
    rep = claim2_test(CONST, pairs, [0.25, 2.0 ** -4], [10_000])
    # c_i = (sigma^i, sigma^i) takes at most order(sigma) = 3 values
    assert rep.stabilized_cardinalities == {3}
    assert rep.consistent and rep.sound


def test_claim2_swap_common_cardinality():
    pairs = [close_pair(s, depth=20_064) for s in range(6)]
    rep = claim2_test(SWAP, pairs, [2.0 ** -2, 2.0 ** -4, 2.0 ** -6], [20_000])
    assert rep.sound
    assert rep.consistent
    assert rep.stabilized_cardinalities == {4}
    assert rep.disagreements == []


def test_claim2_depth_shortfall_is_undetermined():
    x = SymbolicWord(2, bytes(50))
    rep = claim2_test(SWAP, [(x, x)], [0.25], [100])
    assert rep.rows[0]["status"] == "Undetermined"
    assert rep.consistent
