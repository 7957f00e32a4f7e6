import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from porous_spde.errors import ConfigurationError, DomainError, ExtrapolationError
from porous_spde.nonlinearity import (
    beta_eval,
    beta_inverse,
    beta_prime,
    check_assumptions,
    from_table,
    j_eval,
    load_table_csv,
    power_law,
    power_plus_linear,
    regularize,
)

reals = st.floats(-10, 10, allow_nan=False)


def test_power_law_values():
    nl = power_law(2)
    assert beta_eval(nl, 3.0) == 9.0
    assert beta_eval(nl, -3.0) == -9.0
    assert beta_eval(nl, 0.0) == 0.0
    assert beta_eval(power_law(3), -2.0) == -8.0


def test_beta_prime_with_regularization():
    assert beta_prime(power_law(2, lambda_reg=0.1), 2.0) == pytest.approx(4.1, abs=1e-15)
    assert beta_prime(power_law(1), 5.0) == 1.0


def test_j_closed_form():
    assert j_eval(power_law(2), 2.0) == pytest.approx(8 / 3, rel=1e-15)
    assert j_eval(power_law(2), 0.0) == 0.0
    assert j_eval(power_law(2, lambda_reg=0.5), 2.0) == pytest.approx(8 / 3 + 1.0)


@pytest.mark.parametrize("nl", [power_law(2), power_law(3, lambda_reg=0.2), power_plus_linear(2.5, 0.3)])
def test_j_matches_quadrature(nl):
    for r in (-3.0, -0.4, 0.7, 2.5):
        ref, _ = quad(lambda s: float(beta_eval(nl, s)), 0.0, r, epsabs=1e-13)
        assert j_eval(nl, r) == pytest.approx(ref, rel=1e-10, abs=1e-13)


def test_mean_value_inequality_samples():
    r = np.random.default_rng(0).uniform(-10, 10, 1000)
    for nl in (power_law(1), power_law(2), power_law(3, lambda_reg=1.0)):
        assert np.all(r * beta_eval(nl, r) >= j_eval(nl, r))


def test_assumptions_pass_with_regularization():
    rep = check_assumptions(power_law(2, lambda_reg=1.0, alpha=(2, 1, 1 / 3, 1 / 2)))
    assert rep.all_pass, rep.notes


def test_identity_assumptions():
    # j(r) = r^2 / 2, so a3 + a4 <= 1/2 is the sharp coercivity condition
    assert check_assumptions(power_law(1, alpha=(1, 1, 0.25, 0.25))).all_pass
    rep = check_assumptions(power_law(1, alpha=(1, 1, 0.4, 0.4)))
    assert rep.growth and rep.monotone and rep.mean_value
    assert not rep.coercivity


def test_pure_power_law_fails_coercivity_near_zero():
    # |r|^3/3 >= 0.2|r|^3 + 0.1 r^2 holds only for |r| >= 0.75
    rep = check_assumptions(power_law(2, alpha=(2, 1, 0.2, 0.1)))
    assert not rep.coercivity
    assert abs(rep.worst_coercivity_r) < 0.75
    assert any("near r = 0" in note for note in rep.notes)
    assert rep.monotone and rep.growth


def test_check_assumptions_sample_floor():
    with pytest.raises(ConfigurationError):
        check_assumptions(power_law(2), n_samples=50)


def test_regularize():
    nl = regularize(power_law(2), 0.5)
    assert beta_eval(nl, 1.0) == 1.5
    twice = regularize(regularize(power_law(2), 0.25), 0.25)
    r = np.linspace(-5, 5, 101)
    np.testing.assert_array_equal(beta_eval(twice, r), beta_eval(nl, r))
    a, b = np.meshgrid(r, r)
    assert np.all((beta_eval(nl, a) - beta_eval(nl, b)) * (a - b) >= 0.5 * (a - b) ** 2 - 1e-12)
    for lam in (0.0, -1.0):
        with pytest.raises(DomainError):
            regularize(power_law(2), lam)


@settings(max_examples=200)
@given(reals, st.sampled_from([1.0, 2.0, 3.0, 2.5]), st.floats(0, 2))
def test_odd_and_monotone(r, m, lam):
    nl = power_law(m, lambda_reg=lam)
    assert beta_eval(nl, -r) == -beta_eval(nl, r)
    assert beta_eval(nl, r + 0.1) >= beta_eval(nl, r)


@settings(max_examples=200)
@given(reals, st.sampled_from([1.0, 2.0, 3.0]))
def test_j_derivative_is_beta(r, m):
    nl = power_law(m, lambda_reg=0.1)
    d = 1e-6
    fd = (j_eval(nl, r + d) - j_eval(nl, r)) / d
    bp = abs(beta_prime(nl, r)) + abs(beta_prime(nl, r + d))
    assert abs(fd - beta_eval(nl, r)) <= bp * d + 1e-8 * (1 + abs(j_eval(nl, r)))


@settings(max_examples=200)
@given(reals, st.sampled_from([1.0, 2.0, 3.0]))
def test_beta_prime_matches_centered_difference(r, m):
    nl = power_law(m, lambda_reg=0.05)
    # beta'' jumps at 0 for m = 2, so keep the step small enough for an O(d) error there
    d = 1e-7
    fd = (beta_eval(nl, r + d) - beta_eval(nl, r - d)) / (2 * d)
    assert fd == pytest.approx(beta_prime(nl, r), rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("nl", [power_law(1), power_law(2, lambda_reg=1e-3), power_plus_linear(3, 0.5)])
def test_beta_inverse(nl):
    r = np.linspace(-7, 7, 301)
    np.testing.assert_allclose(beta_inverse(nl, beta_eval(nl, r)), r, rtol=1e-12, atol=1e-12)


def test_beta_inverse_needs_strict_monotone():
    with pytest.raises(DomainError):
        beta_inverse(power_law(2), 1.0)


def test_table_interpolation_and_extrapolation():
    nl = from_table([-2, 0, 1, 3], [-4, 0, 1, 9])
    assert beta_eval(nl, 2.0) == pytest.approx(5.0)
    assert beta_prime(nl, 2.0) == pytest.approx(4.0)
    assert j_eval(nl, 1.0) == pytest.approx(0.5)
    assert j_eval(nl, 3.0) == pytest.approx(0.5 + 10.0)
    assert j_eval(nl, -2.0) == pytest.approx(4.0)
    with pytest.raises(ExtrapolationError):
        beta_eval(nl, 3.5)


def test_table_validation():
    with pytest.raises(ConfigurationError):
        from_table([0, 1, 1], [0, 1, 2])
    with pytest.raises(ConfigurationError):
        from_table([0, 1, 2], [0, 2, 1])
    with pytest.raises(ConfigurationError):
        from_table([1, 2], [0, 1])


def test_load_table_csv(tmp_path):
    p = tmp_path / "beta.csv"
    p.write_text("r,beta\n-1,-1\n0,0\n2,4\n")
    nl = load_table_csv(p)
    assert beta_eval(nl, 1.0) == pytest.approx(2.0)
    bad = tmp_path / "bad.csv"
    bad.write_text("-1,-1\n0,zero\n")
    with pytest.raises(ConfigurationError, match=":2:"):
        load_table_csv(bad)
