import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assigncorr.assign import Design, canonicalize, random_balanced
from assigncorr.correlation import (
    ClampedVarianceWarning,
    InconsistentInputWarning,
    block_phi_analytic,
    block_phi_fraction,
    block_uniqueness_counts,
    phi_complete,
    phi_complete_fraction,
    phi_exact,
    phi_monte_carlo,
    phi_of_half_matrix,
    phi_upper_bound,
    psi,
    psi_sums,
    relative_sd_increase,
    relative_sd_increase_general,
    risk_report,
    var_mse_large_h,
    var_mse_theorem4,
)
from assigncorr.errors import InvalidArgument, NoNonMirrorPairs
from assigncorr.estimators import PotentialOutcomes
from assigncorr.generators import BlockSpec, block_enumerate
from assigncorr.sampling import CompleteSampler, DesignSampler

import reference as ref


def _random_design(seed, n, k):
    rng = np.random.default_rng(seed)
    half = np.unique(canonicalize(random_balanced(rng, k, n)), axis=0)
    return Design.from_matrix(half)


# ---------------------------------------------------------------------------
# exact phi


def test_phi_full_n8_frozen():
    # 2/17, from the reference pair scan in test_phi_exact_matches_reference
    est = phi_exact(Design.complete(8))
    assert est.value == 2 / 17
    assert est.method == "exact"
    assert est.pairs_used == 70 * 68 // 2


def test_phi_h4_design():
    # the two half vectors 1100 and 1010 share one treated unit: u = 1 = N/4
    assert phi_exact(Design.from_half(["1100", "1010"])).value == 0.0
    # 111000 and 110100: u = 1, (4/6)^2 (1 - 1.5)^2 = 1/9
    assert phi_exact(Design.from_half(["111000", "110100"])).value == pytest.approx(1 / 9, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([6, 8, 10]), st.integers(2, 10))
def test_phi_exact_matches_reference(seed, n, k):
    d = _random_design(seed, n, k)
    if d.H < 4:
        return
    want = ref.phi([tuple(v.to_array()) for v in d])
    assert Fraction(phi_exact(d).value) == Fraction(float(want))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([6, 8, 10, 12]), st.integers(2, 20))
def test_phi_bounds(seed, n, k):
    d = _random_design(seed, n, k)
    if d.H < 4:
        return
    assert 0 <= phi_exact(d).value <= phi_upper_bound(n) + 1e-15


def test_phi_needs_nonmirror_pairs():
    with pytest.raises(NoNonMirrorPairs):
        phi_exact(Design(["1100", "0011"]))


@pytest.mark.parametrize("n", [6, 8, 10, 12])
def test_phi_complete_exact_equals_pair_scan(n):
    assert phi_complete(n, "exact_sum") == phi_exact(Design.complete(n)).value


def test_phi_complete_reference_n6():
    assert phi_complete_fraction(6) == ref.phi(ref.balanced(6))


def test_phi_complete_gap_shrinks():
    gaps = [abs(phi_complete(n) - 1 / (n - 1)) for n in range(6, 60, 2)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert phi_complete(100, "approx") == 1 / 99


# ---------------------------------------------------------------------------
# Monte Carlo phi


def test_mc_phi_complete_randomization():
    est = phi_monte_carlo(CompleteSampler(50), 2000, seed=11)
    assert abs(est.value - phi_complete(50)) < 4 * est.standard_error
    assert est.pairs_used == 2000 * 1999 // 2
    assert est.provenance["seed"] == 11


def test_mc_phi_deterministic():
    a = phi_monte_carlo(CompleteSampler(30), 500, seed=3, stream=(4,))
    b = phi_monte_carlo(CompleteSampler(30), 500, seed=3, stream=(4,))
    c = phi_monte_carlo(CompleteSampler(30), 500, seed=3, stream=(5,))
    assert a == b
    assert a.value != c.value


def test_mc_phi_of_whole_design_is_exact():
    d = Design.complete(8)
    est = phi_monte_carlo(DesignSampler(d), 35, seed=0)
    assert est.value == pytest.approx(phi_exact(d).value, abs=1e-15)


def test_mc_standard_error_is_calibrated():
    vals, ses = [], []
    for s in range(40):
        e = phi_monte_carlo(CompleteSampler(20), 300, seed=s)
        vals.append(e.value)
        ses.append(e.standard_error)
    ratio = np.std(vals, ddof=1) / np.mean(ses)
    assert 0.6 < ratio < 1.6


def test_phi_of_half_matrix_small():
    half = np.array([[1, 1, 0, 0], [1, 0, 1, 0], [1, 0, 0, 1]], dtype=bool)
    value, se, pairs = phi_of_half_matrix(half)
    assert pairs == 3 and value == 0.0


# ---------------------------------------------------------------------------
# psi


def _psi_by_definition(c):
    c = [Fraction(x) for x in c]
    n = len(c)
    s1 = sum(c[i] ** 2 * c[j] ** 2 for i, j in itertools.combinations(range(n), 2))
    s2 = sum(c[i] * c[j] * c[k] * (c[i] + c[j] + c[k]) for i, j, k in itertools.combinations(range(n), 3))
    s3 = 3 * sum(c[i] * c[j] * c[k] * c[l] for i, j, k, l in itertools.combinations(range(n), 4))
    return s1, s2, s3


def test_psi_worked_example():
    po = PotentialOutcomes([1, 2, 3, 4], [4, 6, 1, 7])
    assert psi(po, exact=True) == Fraction(171, 4)
    assert psi(po) == pytest.approx(42.75, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=4, max_size=9))
def test_psi_sums_match_definition(c):
    assert psi_sums([Fraction(x) for x in c]) == _psi_by_definition(c)


@settings(max_examples=30)
@given(st.lists(st.floats(-100, 100), min_size=4, max_size=12).filter(lambda v: len(v) % 2 == 0), st.floats(-50, 50))
def test_psi_shift_invariant(y, shift):
    y = np.array(y)
    a = psi(PotentialOutcomes(y, y + 1.0))
    b = psi(PotentialOutcomes(y + shift, y + 1.0 + shift))
    assert a == pytest.approx(b, rel=1e-6, abs=1e-6)


def test_psi_float_matches_exact():
    rng = np.random.default_rng(2)
    po = PotentialOutcomes(rng.normal(size=20), rng.normal(size=20))
    assert psi(po) == pytest.approx(float(psi(po, exact=True)), rel=1e-10)


def test_psi_expectation_homogeneous_normal():
    # y0 ~ N(0,1) with a constant effect gives E[psi] = 8
    rng = np.random.default_rng(9)
    vals = [psi(PotentialOutcomes.from_effects(y, np.ones(40))) for y in rng.standard_normal((4000, 40))]
    assert abs(np.mean(vals) - 8) < 4 * np.std(vals) / math.sqrt(len(vals))


# ---------------------------------------------------------------------------
# variance of the MSE


def test_variance_formula_worked_example():
    po = PotentialOutcomes([1, 2, 3, 4], [4, 6, 1, 7])
    p, phik = psi(po, exact=True), phi_complete_fraction(4)
    assert var_mse_theorem4(4, 2, phik, phik, p) == Fraction(57, 8)
    assert var_mse_theorem4(4, 4, phik, phik, p) == Fraction(57, 32)
    assert var_mse_theorem4(4, 6, phik, phik, p) == 0


def test_variance_formula_validation():
    with pytest.raises(InvalidArgument):
        var_mse_theorem4(4, 8, 0.1, 0.1, 1.0)
    with pytest.raises(InvalidArgument):
        var_mse_theorem4(4, 3, 0.1, 0.1, 1.0)
    with pytest.raises(InvalidArgument):
        var_mse_theorem4(4, 2, 1.5, 0.1, 1.0)


def test_variance_formula_clamps_negative():
    with pytest.warns(ClampedVarianceWarning):
        assert var_mse_theorem4(50, 10**6, 0.0, 0.0204, 8.0) == 0.0


def test_large_h_form():
    assert var_mse_large_h(50, 0.0218, 8.0) == pytest.approx(4 / 2500 * 8 * (0.0218 - 1 / 49))
    with pytest.warns(ClampedVarianceWarning):
        assert var_mse_large_h(50, 0.01, 8.0) == 0.0


def test_relative_sd_increase():
    assert relative_sd_increase(50, 0.0218) == pytest.approx(100 * math.sqrt(2 * (0.0218 - 1 / 49)))
    assert relative_sd_increase(50, 1 / 49) == 0.0
    # just below the benchmark: silent zero
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert relative_sd_increase(50, 1 / 49 - 1e-6) == 0.0
    with pytest.warns(InconsistentInputWarning):
        assert relative_sd_increase(50, 0.01) == 0.0


def test_relative_sd_general_reduces_to_default():
    # psi = 8 and sigma2_cr = 4/N recover the default
    assert relative_sd_increase_general(50, 0.0225, 8.0, 4 / 50) == pytest.approx(relative_sd_increase(50, 0.0225))


# ---------------------------------------------------------------------------
# blocks


def test_block_uniqueness_counts_n8_two_blocks():
    # each block of 4 contributes 1, 4, 1 vectors at i = 0, 1, 2
    assert block_uniqueness_counts([4, 4]) == [1, 8, 18, 8, 1]


@pytest.mark.parametrize("layout,size", [("two_blocks", 4), ("pair_blocks", 2)])
def test_block_formulas_match_enumeration_n8(layout, size):
    d = block_enumerate(BlockSpec.equal(8, size))
    assert abs(block_phi_analytic(8, layout) - phi_exact(d).value) < 1e-12


@pytest.mark.parametrize("sizes", [[2, 4], [4, 4, 2], [6, 2], [2, 2, 2, 4]])
def test_block_fraction_matches_enumeration(sizes):
    block_of = [b for b, s in enumerate(sizes) for _ in range(s)]
    d = block_enumerate(BlockSpec(tuple(block_of)))
    if d.H < 4:
        return
    assert float(block_phi_fraction(sizes)) == pytest.approx(phi_exact(d).value, abs=1e-15)


def test_equal_blocks_agrees_with_named_layouts():
    assert block_phi_analytic(12, "equal_blocks", b=6) == pytest.approx(block_phi_analytic(12, "two_blocks"))
    assert block_phi_analytic(12, "equal_blocks", b=2) == pytest.approx(block_phi_analytic(12, "pair_blocks"))


def test_block_limits_at_n400():
    n = 400
    assert block_phi_analytic(n, "two_blocks") == pytest.approx(1 / (n - 2), rel=0.02)
    assert block_phi_analytic(n, "pair_blocks") == pytest.approx(2 / n, rel=0.02)
    assert block_phi_analytic(n, "limit", b=2) == 2 / n


def test_block_layout_errors():
    with pytest.raises(InvalidArgument):
        block_phi_analytic(10, "two_blocks")
    with pytest.raises(InvalidArgument):
        block_phi_analytic(12, "equal_blocks", b=5)
    with pytest.raises(InvalidArgument):
        block_phi_analytic(12, "nope")


# ---------------------------------------------------------------------------
# report


def test_risk_report_json_keys():
    est = phi_exact(Design.complete(8))
    js = risk_report(est, H=70).to_json()
    assert set(js) == {
        "n", "h", "phi", "phi_se", "phi_complete_exact", "phi_complete_approx",
        "var_mse", "rel_sd_increase_pct", "method", "pairs_used", "seed",
    }
    assert js["var_mse"] == 0.0
    assert js["rel_sd_increase_pct"] == 0.0


def test_risk_report_large_h():
    est = phi_monte_carlo(CompleteSampler(50), 500, seed=1)
    rep = risk_report(est, psi_value=None)
    assert rep.var_mse is None and rep.H == "large"
