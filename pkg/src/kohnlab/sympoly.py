"""Exact Wirtinger-polynomial calculus over Gaussian rationals.

Polynomials in a single complex variable z and its conjugate are stored as
coefficient maps keyed by bidegree (a, b), meaning z^a zbar^b.  All arithmetic
is exact (Fraction-based); nothing is rounded until a caller explicitly
evaluates at a floating point argument.
"""

from __future__ import annotations

import math
from fractions import Fraction


class HarmonicPolynomial(Exception):
    """Raised when an operation needs a nonzero Levi function but got none."""


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    raise TypeError(f"cannot coerce {x!r} to Fraction")


class CRat:
    """Gaussian rational: exact complex number re + i*im with rational parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _frac(re)
        self.im = _frac(im)

    @staticmethod
    def of(x) -> "CRat":
        if isinstance(x, CRat):
            return x
        if isinstance(x, complex):
            return CRat(Fraction(x.real).limit_denominator(10**12),
                        Fraction(x.imag).limit_denominator(10**12))
        return CRat(_frac(x))

    def __add__(self, other):
        other = CRat.of(other)
        return CRat(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = CRat.of(other)
        return CRat(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return CRat.of(other) - self

    def __mul__(self, other):
        other = CRat.of(other)
        return CRat(self.re * other.re - self.im * other.im,
                    self.re * other.im + self.im * other.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = CRat.of(other)
        d = other.re * other.re + other.im * other.im
        if d == 0:
            raise ZeroDivisionError("division by zero CRat")
        return CRat((self.re * other.re + self.im * other.im) / d,
                    (self.im * other.re - self.re * other.im) / d)

    def __neg__(self):
        return CRat(-self.re, -self.im)

    def conj(self) -> "CRat":
        return CRat(self.re, -self.im)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __eq__(self, other):
        other = CRat.of(other)
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def to_complex(self) -> complex:
        return complex(self.re) + 1j * complex(self.im)

    def __abs__(self) -> float:
        return abs(self.to_complex())

    def __repr__(self):
        return f"CRat({self.re}, {self.im})"


I = CRat(0, 1)
ZERO = CRat(0, 0)
ONE = CRat(1, 0)


class WPoly:
    """Polynomial in z, zbar with CRat coefficients, keyed by bidegree (a, b)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        cl = {}
        if coeffs:
            for (a, b), c in coeffs.items():
                c = CRat.of(c)
                if not c.is_zero():
                    if a < 0 or b < 0:
                        raise ValueError("negative bidegree")
                    cl[(a, b)] = c
        self.coeffs = cl

    @staticmethod
    def monomial(a: int, b: int, c=1) -> "WPoly":
        return WPoly({(a, b): CRat.of(c)})

    @staticmethod
    def zero() -> "WPoly":
        return WPoly()

    @staticmethod
    def const(c) -> "WPoly":
        return WPoly({(0, 0): CRat.of(c)})

    def is_zero(self) -> bool:
        return not self.coeffs

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self.coeffs:
            return -1
        return max(a + b for (a, b) in self.coeffs)

    def __add__(self, other):
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, ZERO) + c
        return WPoly(out)

    def __sub__(self, other):
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, ZERO) - c
        return WPoly(out)

    def __neg__(self):
        return WPoly({k: -c for k, c in self.coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, WPoly):
            out = {}
            for (a1, b1), c1 in self.coeffs.items():
                for (a2, b2), c2 in other.coeffs.items():
                    k = (a1 + a2, b1 + b2)
                    out[k] = out.get(k, ZERO) + c1 * c2
            return WPoly(out)
        return self.scale(other)

    __rmul__ = __mul__

    def scale(self, c) -> "WPoly":
        c = CRat.of(c)
        return WPoly({k: v * c for k, v in self.coeffs.items()})

    def conj(self) -> "WPoly":
        return WPoly({(b, a): c.conj() for (a, b), c in self.coeffs.items()})

    def __eq__(self, other):
        return isinstance(other, WPoly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def dz(self) -> "WPoly":
        out = {}
        for (a, b), c in self.coeffs.items():
            if a > 0:
                out[(a - 1, b)] = c * a
        return WPoly(out)

    def dzbar(self) -> "WPoly":
        out = {}
        for (a, b), c in self.coeffs.items():
            if b > 0:
                out[(a, b - 1)] = c * b
        return WPoly(out)

    def shift(self, w: "CRat") -> "WPoly":
        """Exact substitution z -> z + w, zbar -> zbar + conj(w)."""
        wc = w.conj()
        out = WPoly.zero()
        for (a, b), c in self.coeffs.items():
            # binomial expansion of (z+w)^a (zbar+wbar)^b
            for i in range(a + 1):
                ci = CRat.of(math.comb(a, i)) * _cpow(w, a - i)
                for j in range(b + 1):
                    cj = CRat.of(math.comb(b, j)) * _cpow(wc, b - j)
                    out = out + WPoly.monomial(i, j, c * ci * cj)
        return out

    def evaluate(self, z: complex) -> complex:
        """Float evaluation (the only lossy exit from the exact world)."""
        z = complex(z)
        zb = z.conjugate()
        total = 0j
        for (a, b), c in self.coeffs.items():
            total += c.to_complex() * z**a * zb**b
        return total

    def evaluate_exact(self, z: CRat) -> CRat:
        zb = z.conj()
        total = ZERO
        for (a, b), c in self.coeffs.items():
            total = total + c * _cpow(z, a) * _cpow(zb, b)
        return total

    def coeff_norm(self) -> float:
        return sum(abs(c) for c in self.coeffs.values()) if self.coeffs else 0.0

    def __repr__(self):
        if not self.coeffs:
            return "WPoly(0)"
        parts = []
        for (a, b) in sorted(self.coeffs):
            c = self.coeffs[(a, b)]
            parts.append(f"({c.re}{'+' if c.im >= 0 else ''}{c.im}j)*z^{a}*zb^{b}")
        return "WPoly(" + " + ".join(parts) + ")"


def _cpow(c: CRat, n: int) -> CRat:
    out = ONE
    for _ in range(n):
        out = out * c
    return out


class RealWPoly:
    """WPoly constrained to be real-valued on C: coeff(a,b) = conj(coeff(b,a))."""

    __slots__ = ("inner",)

    def __init__(self, inner: WPoly):
        for (a, b), c in inner.coeffs.items():
            mirror = inner.coeffs.get((b, a))
            if mirror is None or mirror != c.conj():
                raise ValueError(f"not real-valued: coefficient at {(a, b)} "
                                 f"has no conjugate partner")
        self.inner = inner

    @staticmethod
    def abs_pow(m: int, c=1) -> "RealWPoly":
        """c*|z|^m for even m (and real c)."""
        if m % 2:
            raise ValueError("|z|^m is polynomial only for even m")
        return RealWPoly(WPoly.monomial(m // 2, m // 2, c))

    @staticmethod
    def real_part(p: WPoly) -> "RealWPoly":
        """2*Re(p) ... actually Re(p) = (p + conj(p))/2."""
        half = Fraction(1, 2)
        return RealWPoly(p.scale(half) + p.conj().scale(half))

    def __add__(self, other):
        return RealWPoly(self.inner + other.inner)

    def __sub__(self, other):
        return RealWPoly(self.inner - other.inner)

    def __eq__(self, other):
        return isinstance(other, RealWPoly) and self.inner == other.inner

    def __hash__(self):
        return hash(self.inner)

    def is_zero(self) -> bool:
        return self.inner.is_zero()

    def degree(self) -> int:
        return self.inner.degree()

    def evaluate(self, z: complex) -> float:
        return self.inner.evaluate(z).real

    def __repr__(self):
        return f"RealWPoly({self.inner!r})"


def wirtinger_dz(p: WPoly) -> WPoly:
    return p.dz()


def wirtinger_dzbar(p: WPoly) -> WPoly:
    return p.dzbar()


def levi(p: RealWPoly) -> RealWPoly:
    """Mixed second Wirtinger derivative d^2 p / dz dzbar (real-valued)."""
    return RealWPoly(p.inner.dz().dzbar())


def cr_degree(p: RealWPoly) -> int:
    """2 + total degree of the Levi function of p."""
    lam = levi(p)
    if lam.is_zero():
        raise HarmonicPolynomial("Levi function vanishes identically")
    return 2 + lam.degree()


def is_admissible(p: RealWPoly, samples=None) -> bool:
    """Semi-decision of 'subharmonic and nonharmonic'.

    Checks that the Levi function is not identically zero, is >= 0 on a
    sampling of a disk whose radius adapts to the coefficient size, and that
    the top-degree homogeneous part of the Levi function is nonnegative on the
    circle (so positivity cannot fail at infinity along rays).  A False return
    includes 'undetermined: negative sample found'.
    """
    lam = levi(p)
    if lam.is_zero():
        return False
    tol = -1e-12 * (1.0 + lam.inner.coeff_norm())
    if samples is None:
        r = 1.0 + p.inner.coeff_norm()
        samples = []
        for k in range(12):
            rad = r * (k + 1) / 12.0
            for a in range(24):
                ang = 2 * math.pi * a / 24.0
                samples.append(rad * complex(math.cos(ang), math.sin(ang)))
        samples.append(0j)
    for z in samples:
        if lam.evaluate(z) < tol:
            return False
    # leading radial behaviour
    d = lam.degree()
    top = WPoly({k: c for k, c in lam.inner.coeffs.items() if k[0] + k[1] == d})
    for a in range(64):
        ang = 2 * math.pi * a / 64.0
        if top.evaluate(complex(math.cos(ang), math.sin(ang))).real < tol:
            return False
    return True


def surface_entry_to_poly(entries) -> RealWPoly:
    """Build a RealWPoly from surface-file entries.

    Each entry is (a, b, re_num/re_den, im_num/im_den), i.e. a 4- or 6-tuple
    (a, b, re_num, re_den, im_num, im_den) or (a, b, "p/q", "r/s") strings.
    """
    coeffs = {}
    for e in entries:
        if len(e) == 6:
            a, b, rn, rd, im_n, im_d = e
            c = CRat(Fraction(int(rn), int(rd)), Fraction(int(im_n), int(im_d)))
        elif len(e) == 4:
            a, b, re_s, im_s = e
            c = CRat(Fraction(str(re_s)), Fraction(str(im_s)))
        else:
            raise ValueError(f"bad surface entry {e!r}")
        coeffs[(int(a), int(b))] = coeffs.get((int(a), int(b)), ZERO) + c
    return RealWPoly(WPoly(coeffs))


def poly_to_surface_entries(p: RealWPoly):
    out = []
    for (a, b) in sorted(p.inner.coeffs):
        c = p.inner.coeffs[(a, b)]
        out.append((a, b, f"{c.re.numerator}/{c.re.denominator}",
                    f"{c.im.numerator}/{c.im.denominator}"))
    return out
