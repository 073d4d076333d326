import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from kohnlab.sympoly import (
    CRat, WPoly, RealWPoly, HarmonicPolynomial,
    wirtinger_dz, wirtinger_dzbar, levi, cr_degree, is_admissible,
    surface_entry_to_poly, poly_to_surface_entries,
)


def test_crat_exact_arithmetic():
    a = CRat(Fraction(1, 3), Fraction(2, 7))
    b = CRat(Fraction(5, 11), Fraction(-1, 13))
    s = a + b
    assert s.re == Fraction(1, 3) + Fraction(5, 11)
    p = a * b
    assert p.re == Fraction(1, 3) * Fraction(5, 11) - Fraction(2, 7) * Fraction(-1, 13)
    assert (a * b.conj()).conj() == a.conj() * b
    q = a / b
    assert q * b == a


def test_dz_power_rule():
    # d/dz (z^2 zbar) = 2 z zbar
    p = WPoly.monomial(2, 1)
    assert wirtinger_dz(p) == WPoly.monomial(1, 1, 2)


def test_dz_kills_antiholomorphic():
    p = WPoly.monomial(0, 3)
    assert wirtinger_dz(p).is_zero()


def test_dzbar_coefficient_shift():
    # d/dzbar (z^2 zbar^2) = 2 z^2 zbar
    p = WPoly.monomial(2, 2)
    assert wirtinger_dzbar(p) == WPoly.monomial(2, 1, 2)


def test_levi_examples():
    assert levi(RealWPoly.abs_pow(2)) == RealWPoly(WPoly.const(1))
    assert levi(RealWPoly.abs_pow(4)) == RealWPoly.abs_pow(2, 4)
    assert levi(RealWPoly.abs_pow(6)) == RealWPoly.abs_pow(4, 9)


def test_cr_degree():
    assert cr_degree(RealWPoly.abs_pow(2)) == 2
    for m in (2, 4, 6, 8):
        assert cr_degree(RealWPoly.abs_pow(m)) == m
    # harmonic part contributes nothing
    p = RealWPoly.abs_pow(4) + RealWPoly.real_part(WPoly.monomial(5, 0))
    assert cr_degree(p) == 4


def test_cr_degree_harmonic_raises():
    h = RealWPoly.real_part(WPoly.monomial(3, 0))
    with pytest.raises(HarmonicPolynomial):
        cr_degree(h)


def test_is_admissible():
    assert is_admissible(RealWPoly.abs_pow(4))
    assert not is_admissible(RealWPoly.real_part(WPoly.monomial(3, 0)))
    # z^2 zbar^2 - 4 z zbar: Levi = 4|z|^2 - 4 < 0 near 0
    p = RealWPoly(WPoly({(2, 2): 1, (1, 1): -4}))
    assert not is_admissible(p)


def _random_wpoly(rng, max_deg=4, span=6):
    coeffs = {}
    for _ in range(rng.randrange(1, span)):
        a = rng.randrange(0, max_deg + 1)
        b = rng.randrange(0, max_deg + 1)
        coeffs[(a, b)] = CRat(Fraction(rng.randrange(-9, 10), rng.randrange(1, 7)),
                              Fraction(rng.randrange(-9, 10), rng.randrange(1, 7)))
    return WPoly(coeffs)


def test_mixed_partials_commute_100_cases():
    rng = random.Random(20260825)
    for _ in range(100):
        p = _random_wpoly(rng)
        assert p.dz().dzbar() == p.dzbar().dz()


def test_levi_preserves_real_symmetry():
    rng = random.Random(7)
    for _ in range(50):
        p = _random_wpoly(rng)
        q = RealWPoly.real_part(p)
        lam = levi(q)
        # constructor itself validates the conjugate-symmetry invariant
        assert isinstance(lam, RealWPoly)
        z = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        assert abs(lam.inner.evaluate(z).imag) < 1e-12 * (1 + lam.inner.coeff_norm())


def test_cr_degree_invariant_under_harmonic_addition():
    rng = random.Random(99)
    base = RealWPoly.abs_pow(4)
    for _ in range(30):
        # harmonic: only pure-z or pure-zbar monomials
        a = rng.randrange(1, 6)
        c = Fraction(rng.randrange(-5, 6) or 1, rng.randrange(1, 5))
        h = RealWPoly.real_part(WPoly.monomial(a, 0, c))
        assert cr_degree(base + h) == cr_degree(base)


@given(st.integers(0, 5), st.integers(0, 5),
       st.fractions(min_value=-10, max_value=10, max_denominator=20))
@settings(max_examples=60, deadline=None)
def test_derivative_linearity(a, b, c):
    if c == 0:
        return
    p = WPoly.monomial(a, b, c)
    q = WPoly.monomial(a, b, 1).scale(c)
    assert wirtinger_dz(p) == wirtinger_dz(q)
    assert wirtinger_dzbar(p) == wirtinger_dzbar(q)


def test_shift_matches_evaluation():
    rng = random.Random(3)
    for _ in range(20):
        p = _random_wpoly(rng, max_deg=3)
        w = CRat(Fraction(rng.randrange(-3, 4), 2), Fraction(rng.randrange(-3, 4), 3))
        ps = p.shift(w)
        z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        lhs = ps.evaluate(z)
        rhs = p.evaluate(z + w.to_complex())
        assert abs(lhs - rhs) < 1e-9 * (1 + abs(rhs))


def test_surface_entry_round_trip():
    p = RealWPoly(WPoly({(2, 2): 1, (1, 1): CRat(Fraction(3, 2))}))
    entries = poly_to_surface_entries(p)
    q = surface_entry_to_poly(entries)
    assert p == q
