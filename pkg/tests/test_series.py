import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg

from cvqe.errors import CapacityError, DimensionMismatchError
from cvqe.series import (
    OperatorPattern,
    adiabatic_propagator,
    adiabatic_weight,
    compare_truncated_series,
    diabatic_weight,
    enumerate_order,
    nested_integral_operator,
    pattern_sum,
    truncated_series,
    verify_weights_numeric,
    weights_table,
)


def _hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (a + a.conj().T) / 2
    return scale * h / np.linalg.norm(h, ord=2)


@pytest.mark.parametrize("label, w_bar", [
    ("I", Fraction(1)),
    ("H0", Fraction(1)),
    ("H1", Fraction(1, 2)),
    ("H0H1", Fraction(1, 6)),
    ("H1H0", Fraction(1, 3)),
    ("H1H1", Fraction(1, 8)),
    ("H0H0H1", Fraction(1, 24)),
    ("H0H1H0", Fraction(1, 12)),
    ("H1H0H0", Fraction(1, 8)),
    ("H0H0H0", Fraction(1, 6)),
    ("H1H1H1", Fraction(1, 48)),
])
def test_adiabatic_weights(label, w_bar):
    assert adiabatic_weight(OperatorPattern.parse(label)) == w_bar


def test_weights_sum_like_scalar_exponentials():
    # scalar H0 = H1 = 1: U(1, T) = exp(-2iT), U_A(T) = exp(-3iT/2)
    for n in range(7):
        rows = enumerate_order(n)
        assert sum(r.w for r in rows) == Fraction(2 ** n, math.factorial(n))
        assert sum(r.w_bar for r in rows) == Fraction(3, 2) ** n / math.factorial(n)


def test_dropping_h0_never_lowers_the_weight():
    for n in range(1, 7):
        for row in enumerate_order(n):
            p = row.pattern
            assert row.w_bar <= adiabatic_weight(p.without(0))
            for k in (k for k, bit in enumerate(p.bits) if bit == 0):
                shorter = p.without(k)
                assert shorter.h1_count == p.h1_count
                assert row.w_bar <= adiabatic_weight(shorter)


def test_pattern_parse_and_label():
    p = OperatorPattern.parse("H0 H1 H0")
    assert p.bits == (0, 1, 0)
    assert p.label == "H0H1H0"
    assert p.h1_count == 1 and p.tau_power == 4
    assert OperatorPattern.parse("I").bits == ()
    assert p.without(1) == OperatorPattern((0, 0))
    assert diabatic_weight(p) == Fraction(1, 6)
    for bad in ("X0", "H2", "H0H"):
        with pytest.raises(ValueError):
            OperatorPattern.parse(bad)


def test_enumeration_limits():
    assert [r.pattern.label for r in enumerate_order(2)] == ["H0H0", "H0H1", "H1H0", "H1H1"]
    assert len(enumerate_order(0)) == 1
    with pytest.raises(CapacityError):
        enumerate_order(9)
    with pytest.raises(ValueError):
        enumerate_order(-1)


def test_weights_table_layout():
    table = weights_table(3, cumulative=True)
    assert list(table.columns) == ["order", "pattern", "w_num", "w_den", "wbar_num", "wbar_den", "tau_power"]
    assert len(table) == 1 + 2 + 4 + 8
    row = table[table["pattern"] == "H1H0"].iloc[0]
    assert (row["wbar_num"], row["wbar_den"], row["w_den"], row["tau_power"]) == (1, 3, 2, 3)
    assert len(weights_table(3)) == 8


def test_weights_match_quadrature():
    for order in range(6):
        assert verify_weights_numeric(order) < 1e-12
    with pytest.raises(CapacityError):
        verify_weights_numeric(6)


def test_nested_integrals_match_weighted_patterns(rng):
    h0, h1 = _hermitian(rng, 3), _hermitian(rng, 3)
    T = 0.8
    for order in range(5):
        assert np.allclose(nested_integral_operator(h0, h1, T, order), pattern_sum(h0, h1, T, order), atol=1e-12)
    assert np.allclose(nested_integral_operator(h0, h1, 0.0, 2), 0.0)


def test_commuting_case_has_closed_form():
    h0 = np.diag([0.3, -0.2, 0.5])
    h1 = np.diag([1.0, 0.4, -0.7])
    T = 1.3
    expected = scipy.linalg.expm(-1j * (h0 + h1 / 2) * T)
    assert np.allclose(adiabatic_propagator(h0, h1, T), expected, atol=1e-10)


def test_full_diabatic_series_reaches_exponential(rng):
    h0, h1 = _hermitian(rng, 4, 0.5), _hermitian(rng, 4, 0.5)
    T = 0.5
    exact = scipy.linalg.expm(-1j * (h0 + h1) * T)
    assert np.linalg.norm(truncated_series(h0, h1, T, 8, adiabatic=False) - exact, ord=2) < 1e-7


def test_truncation_gaps_shrink_with_order(rng):
    h0, h1 = _hermitian(rng, 4), _hermitian(rng, 4)
    T = 0.5
    exact_adiabatic = adiabatic_propagator(h0, h1, T)
    gaps = [compare_truncated_series(h0, h1, T, n, exact_adiabatic) for n in range(2, 7)]
    assert all(a.diabatic > b.diabatic for a, b in zip(gaps, gaps[1:]))
    assert all(a.adiabatic > b.adiabatic for a, b in zip(gaps, gaps[1:]))
    assert gaps[0].order == 2


def test_dense_input_checks():
    with pytest.raises(DimensionMismatchError):
        pattern_sum(np.eye(2), np.eye(3), 1.0, 1)
    with pytest.raises(CapacityError):
        adiabatic_propagator(np.eye(17), np.eye(17), 1.0)
