import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assigncorr.assign import AssignmentVector, Design, random_balanced
from assigncorr.errors import InvalidArgument
from assigncorr.estimators import (
    PotentialOutcomes,
    complete_randomization_mse,
    design_estimates,
    design_mse,
    diff_in_means,
    sate,
    squared_errors,
)

import reference as ref

Y0 = [1, 2, 3, 4]
Y1 = [4, 6, 1, 7]
EXAMPLE = PotentialOutcomes(Y0, Y1)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def outcomes(draw):
    n = draw(st.sampled_from([4, 6, 8]))
    y0 = draw(st.lists(finite, min_size=n, max_size=n))
    y1 = draw(st.lists(finite, min_size=n, max_size=n))
    return PotentialOutcomes(y0, y1)


def test_validation():
    with pytest.raises(InvalidArgument):
        PotentialOutcomes([1, 2, 3], [1, 2, 3])
    with pytest.raises(InvalidArgument):
        PotentialOutcomes([1, 2, 3, 4], [1, 2, 3])
    with pytest.raises(InvalidArgument):
        PotentialOutcomes([1, 2, 3, np.nan], [1, 2, 3, 4])


def test_outcomes_are_read_only():
    with pytest.raises(ValueError):
        EXAMPLE.y0[0] = 10


def test_worked_example_estimates():
    assert sate(EXAMPLE) == 2.0
    got = [diff_in_means(EXAMPLE, w) for w in Design.complete(4)]
    want = [float(ref.tau_hat(Y0, Y1, w)) for w in ref.balanced(4)]
    assert got == want
    # w1 = 1100: (4 + 6)/2 - (3 + 4)/2
    assert diff_in_means(EXAMPLE, AssignmentVector.from_string("1100")) == 1.5


def test_worked_example_design_mses():
    pairs = [("1100", "0011"), ("1010", "0101"), ("1001", "0110")]
    got = [design_mse(EXAMPLE, Design(p)) for p in pairs]
    assert got == [2 / 8, 50 / 8, 8 / 8]
    assert design_mse(EXAMPLE, Design.complete(4)) == 20 / 8


@given(outcomes(), st.integers(0, 2**32 - 1))
def test_mirror_antisymmetry(po, seed):
    w = random_balanced(np.random.default_rng(seed), 1, po.n)[0]
    a = diff_in_means(po, w) - sate(po)
    b = diff_in_means(po, ~w) - sate(po)
    assert math.isclose(a, -b, rel_tol=1e-9, abs_tol=1e-9)


@given(outcomes())
@settings(max_examples=30)
def test_matrix_and_vector_paths_agree(po):
    w = Design.complete(po.n).matrix()
    many = diff_in_means(po, w)
    single = [diff_in_means(po, row) for row in w]
    assert np.allclose(many, single, rtol=0, atol=1e-9)


def test_squared_errors_nonnegative():
    w = Design.complete(4).matrix()
    assert (squared_errors(EXAMPLE, w) >= 0).all()
    assert np.allclose(design_estimates(EXAMPLE, Design.complete(4)), diff_in_means(EXAMPLE, w))


def test_scale_invariance():
    d = Design(["1100", "0011", "1010", "0101"])
    assert math.isclose(design_mse(EXAMPLE.scaled(3.0), d), 9 * design_mse(EXAMPLE, d))


def test_complete_mse_exact_equals_average_over_all_vectors():
    rng = np.random.default_rng(5)
    po = PotentialOutcomes(rng.normal(size=10), rng.normal(size=10))
    exact = complete_randomization_mse(po)
    assert math.isclose(exact, design_mse(po, Design.complete(10)), rel_tol=1e-12)
    assert complete_randomization_mse(EXAMPLE) == 2.5


def test_complete_mse_reference_rational():
    y0, y1 = [0, 5, -2, 3, 1, 1], [2, 2, 2, 7, -1, 4]
    want = ref.mse(y0, y1, ref.balanced(6))
    got = complete_randomization_mse(PotentialOutcomes(y0, y1))
    assert Fraction(got).limit_denominator(10**6) == want


def test_complete_mse_monte_carlo():
    rng = np.random.default_rng(6)
    po = PotentialOutcomes(rng.normal(size=12), rng.normal(size=12))
    exact = complete_randomization_mse(po)
    est = complete_randomization_mse(po, "monte_carlo", draws=20_000, seed=1)
    assert abs(est.value - exact) < 4 * est.standard_error
    again = complete_randomization_mse(po, "monte_carlo", draws=20_000, seed=1)
    assert again == est


def test_complete_mse_bad_mode():
    with pytest.raises(InvalidArgument):
        complete_randomization_mse(EXAMPLE, "nope")


def test_constant_effect_has_zero_mse():
    po = PotentialOutcomes.from_effects([1.0, 1.0, 1.0, 1.0], [2.0] * 4)
    assert complete_randomization_mse(po) == 0.0
