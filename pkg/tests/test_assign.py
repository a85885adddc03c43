import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assigncorr.assign import (
    AssignmentVector,
    Design,
    canonicalize,
    enumerate_all,
    enumerate_half,
    from_matrix,
    half_matrix,
    inner_products,
    random_balanced,
    to_matrix,
    uniqueness,
    uniqueness_histogram,
    uniqueness_matrix,
    validate_design,
)
from assigncorr.errors import InvalidArgument, InvalidDesign, NoNonMirrorPairs, TooLarge

import reference as ref


@st.composite
def vectors(draw, n=None):
    n = n or draw(st.sampled_from([4, 6, 8, 10, 12]))
    treated = draw(st.permutations(range(n)))[: n // 2]
    return AssignmentVector.from_treated(treated, n)


@st.composite
def vector_pairs(draw):
    n = draw(st.sampled_from([4, 6, 8, 10, 12]))
    return draw(vectors(n)), draw(vectors(n))


def test_string_round_trip():
    w = AssignmentVector.from_string("1100")
    assert w.to_string() == "1100"
    assert w.treated() == (0, 1)
    assert str(w.mirror()) == "0011"


@pytest.mark.parametrize("bad", ["1110", "110", "1", "", "11a0", "10"])
def test_rejects_bad_strings(bad):
    with pytest.raises(InvalidArgument):
        AssignmentVector.from_string(bad)


def test_from_array_and_treated_agree():
    a = AssignmentVector.from_array([0, 1, 1, 0, 1, 0])
    b = AssignmentVector.from_treated([1, 2, 4], 6)
    assert a == b
    assert list(a.to_array()) == [0, 1, 1, 0, 1, 0]


@given(vectors())
def test_mirror_is_involution(w):
    assert w.mirror().mirror() == w
    assert w.mirror() != w
    assert w.canonical().is_canonical()
    assert w.canonical() in (w, w.mirror())


@given(vector_pairs())
def test_uniqueness_symmetric_and_bounded(pair):
    a, b = pair
    u = uniqueness(a, b)
    assert u == uniqueness(b, a)
    assert 0 <= u <= a.n // 2
    assert uniqueness(a, b.mirror()) == a.n // 2 - u
    assert u == ref.uniq(tuple(a.to_array()), tuple(b.to_array()))


def test_uniqueness_endpoints():
    w = AssignmentVector.from_string("101010")
    assert uniqueness(w, w) == 0
    assert uniqueness(w, w.mirror()) == 3


def test_uniqueness_length_mismatch():
    with pytest.raises(InvalidArgument):
        uniqueness(AssignmentVector.from_string("1100"), AssignmentVector.from_string("111000"))


def test_enumeration_order_for_n4():
    assert [str(w) for w in enumerate_all(4)] == ["1100", "1010", "1001", "0110", "0101", "0011"]


@pytest.mark.parametrize("n", [4, 6, 8, 10])
def test_enumeration_matches_reference(n):
    got = [tuple(w.to_array()) for w in enumerate_all(n)]
    assert got == ref.balanced(n)
    assert len(got) == math.comb(n, n // 2)
    half = enumerate_half(n)
    # entry j and entry N_A + 1 - j are mirrors
    assert all(got[-1 - j] == ref.mirror(got[j]) for j in range(len(half)))


def test_half_matrix_matches_objects():
    m = half_matrix(10)
    assert from_matrix(m) == enumerate_half(10)
    assert m[:, 0].all()


def test_enumeration_guard():
    with pytest.raises(TooLarge):
        enumerate_half(32)
    with pytest.raises(InvalidArgument):
        enumerate_half(7)


def test_bulk_uniqueness_matches_scalar():
    rng = np.random.default_rng(4)
    w = random_balanced(rng, 30, 12)
    u = uniqueness_matrix(w)
    vs = from_matrix(w)
    for i in range(30):
        for j in range(30):
            assert u[i, j] == uniqueness(vs[i], vs[j])
    assert np.array_equal(inner_products(w), 12 - 4 * u)


def test_random_balanced_is_balanced_and_roughly_uniform():
    rng = np.random.default_rng(0)
    w = random_balanced(rng, 60_000, 4)
    assert (w.sum(axis=1) == 2).all()
    counts = np.unique(np.packbits(w, axis=1), return_counts=True)[1]
    assert len(counts) == 6
    # each of the 6 vectors has probability 1/6
    assert np.all(np.abs(counts / 60_000 - 1 / 6) < 0.01)


def test_canonicalize_flips_rows_without_unit0():
    w = np.array([[0, 0, 1, 1], [1, 0, 1, 0]], dtype=bool)
    assert canonicalize(w).tolist() == [[True, True, False, False], [True, False, True, False]]


# ---------------------------------------------------------------------------
# designs


def test_validate_design_reports_each_problem():
    kinds = {v.kind for v in validate_design(["1100", "0011", "1010"])}
    assert kinds == {"missing-mirror"}
    kinds = {v.kind for v in validate_design(["1110", "0001"])}
    assert "imbalance" in kinds
    kinds = {v.kind for v in validate_design(["1100", "0011", "1100"])}
    assert "duplicate" in kinds
    kinds = {v.kind for v in validate_design(["1100", "0011", "111000", "000111"])}
    assert "mixed-n" in kinds
    assert validate_design([])[0].kind == "empty"
    assert validate_design(["1100", "0011"]) == []


def test_design_rejects_invalid():
    with pytest.raises(InvalidDesign) as e:
        Design(["1100", "1010"])
    assert {v.kind for v in e.value.violations} == {"missing-mirror"}


def test_design_equality_is_set_based():
    a = Design(["1100", "0011", "1010", "0101"])
    b = Design(["0101", "1010", "0011", "1100"])
    assert a == b and hash(a) == hash(b)
    assert a.H == 4
    assert [str(v) for v in a.half()] == ["1100", "1010"]


def test_from_half_and_matrix():
    d = Design.from_half(["1100", "1010"])
    assert d == Design(["1100", "0011", "1010", "0101"])
    assert Design.from_matrix(np.array([[0, 0, 1, 1], [1, 0, 1, 0]], dtype=bool)) == d
    assert to_matrix(d.half()).shape == (2, 4)


def test_complete_design_size():
    assert Design.complete(8).H == 70


# ---------------------------------------------------------------------------
# uniqueness histogram


def test_histogram_full_n8():
    # frozen from the reference pair scan below
    h = uniqueness_histogram(Design.complete(8))
    assert h.counts == (0, 560, 1260, 560, 0)
    assert h.total_pairs == 70 * 68 // 2


@pytest.mark.parametrize("n", [4, 6, 8])
def test_histogram_matches_reference_scan(n):
    design = ref.balanced(n)
    counts = [0] * (n // 2 + 1)
    for i in range(len(design)):
        for j in range(i + 1, len(design)):
            if design[j] != ref.mirror(design[i]):
                counts[ref.uniq(design[i], design[j])] += 1
    assert uniqueness_histogram(Design.complete(n)).counts == tuple(counts)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from([6, 8, 10, 12]), st.integers(2, 12))
def test_histogram_symmetric(seed, n, k):
    rng = np.random.default_rng(seed)
    half = np.unique(canonicalize(random_balanced(rng, k, n)), axis=0)
    if len(half) < 2:
        return
    h = uniqueness_histogram(Design.from_matrix(half))
    assert h.is_symmetric()
    assert sum(h.counts) == h.total_pairs
    assert h.counts[0] == 0 and h.counts[-1] == 0
    assert abs(h.proportions().sum() - 1) < 1e-12


def test_histogram_needs_two_pairs():
    with pytest.raises(NoNonMirrorPairs):
        uniqueness_histogram(Design(["1100", "0011"]))
