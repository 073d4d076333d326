"""Symbolic tangential CR complex on a decoupled model hypersurface.

The hypersurface Im w = Phi(z) = sum_j P_j(z_j) is identified with C^n x R
with coordinates (z_1..z_n, t).  The CR fields are

    Z_j    = d/dz_j    + i (dP_j/dz_j)    d/dt
    Zbar_j = d/dzbar_j - i (dP_j/dzbar_j) d/dt

and the closed function algebra used everywhere below consists of finite sums

    c * prod_j z_j^{a_j} zbar_j^{b_j} * rho^gamma,   rho = t + i Phi(z),

with exact Gaussian-rational c and rational gamma.  The algebra is closed
because Zbar_j rho = 0, Z_j rho = 2i dP_j/dz_j and T rho = 1.
"""

from __future__ import annotations

import cmath
from fractions import Fraction

from .sympoly import (CRat, WPoly, RealWPoly, ZERO, ONE, I,
                      levi, cr_degree, is_admissible, _frac)


class IdentityViolated(Exception):
    pass


class BranchSingularity(Exception):
    pass


class DecoupledSurface:
    """Im w = sum_j P_j(z_j) with each P_j admissible (subharmonic, nonharmonic)."""

    def __init__(self, factors, check_admissible=True):
        factors = list(factors)
        if not factors:
            raise ValueError("need at least one factor")
        self.factors = factors
        self.n = len(factors)
        self.degrees = [cr_degree(p) for p in factors]
        self.levis = [levi(p) for p in factors]
        for m in self.degrees:
            if m % 2 or m < 2:
                raise ValueError(f"factor degree {m} not an even integer >= 2")
        if check_admissible:
            for k, p in enumerate(factors):
                if not is_admissible(p):
                    raise ValueError(f"factor {k + 1} is not admissible")
        # dP_j/dz_j and dP_j/dzbar_j as WPoly in the single variable z_j
        self.p_z = [p.inner.dz() for p in factors]
        self.p_zbar = [p.inner.dzbar() for p in factors]

    def phi(self, z) -> float:
        return sum(p.evaluate(z[j]) for j, p in enumerate(self.factors))

    def __eq__(self, other):
        return isinstance(other, DecoupledSurface) and self.factors == other.factors


def standard_surface(n_exp: int = 2, m_exp: int = 4) -> DecoupledSurface:
    """The two-factor model P_1 = |z|^n, P_2 = |z|^m."""
    return DecoupledSurface([RealWPoly.abs_pow(n_exp), RealWPoly.abs_pow(m_exp)])


class SymField:
    """Finite sum of terms c * prod z_j^{a_j} zbar_j^{b_j} * rho^gamma."""

    __slots__ = ("surface", "terms")

    def __init__(self, surface: DecoupledSurface, terms=None):
        self.surface = surface
        cl = {}
        if terms:
            for (mono, gamma), c in terms.items():
                c = CRat.of(c)
                if c.is_zero():
                    continue
                mono = tuple((int(a), int(b)) for (a, b) in mono)
                if len(mono) != surface.n:
                    raise ValueError("monomial arity does not match surface")
                gamma = _frac(gamma)
                key = (mono, gamma)
                prev = cl.get(key)
                cl[key] = c if prev is None else prev + c
                if cl[key].is_zero():
                    del cl[key]
        self.terms = cl

    # -- constructors ------------------------------------------------------
    @staticmethod
    def zero(surface):
        return SymField(surface)

    @staticmethod
    def rho_power(surface, gamma) -> "SymField":
        mono = tuple((0, 0) for _ in range(surface.n))
        return SymField(surface, {(mono, _frac(gamma)): ONE})

    @staticmethod
    def monomial(surface, mono, gamma=0, c=1) -> "SymField":
        return SymField(surface, {(tuple(mono), _frac(gamma)): CRat.of(c)})

    @staticmethod
    def const(surface, c) -> "SymField":
        mono = tuple((0, 0) for _ in range(surface.n))
        return SymField(surface, {(mono, Fraction(0)): CRat.of(c)})

    # -- algebra -----------------------------------------------------------
    def __add__(self, other):
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, ZERO) + c
        return SymField(self.surface, out)

    def __sub__(self, other):
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, ZERO) - c
        return SymField(self.surface, out)

    def __neg__(self):
        return SymField(self.surface, {k: -c for k, c in self.terms.items()})

    def scale(self, c):
        c = CRat.of(c)
        return SymField(self.surface, {k: v * c for k, v in self.terms.items()})

    def is_zero(self):
        return not self.terms

    def __eq__(self, other):
        return (isinstance(other, SymField) and self.surface == other.surface
                and self.terms == other.terms)

    def mul_factor_poly(self, j: int, wp: WPoly) -> "SymField":
        """Multiply by a polynomial in the single variable z_j (1-based j)."""
        out = {}
        for (mono, gamma), c in self.terms.items():
            for (a, b), w in wp.coeffs.items():
                m2 = list(mono)
                aj, bj = m2[j - 1]
                m2[j - 1] = (aj + a, bj + b)
                key = (tuple(m2), gamma)
                out[key] = out.get(key, ZERO) + c * w
        return SymField(self.surface, out)

    def __repr__(self):
        if not self.terms:
            return "SymField(0)"
        bits = []
        for (mono, gamma), c in sorted(self.terms.items(),
                                       key=lambda kv: (kv[0][1], kv[0][0])):
            mono_s = "".join(f"z{j+1}^{a}zb{j+1}^{b}" for j, (a, b) in enumerate(mono)
                             if a or b)
            bits.append(f"({c.re}+{c.im}i){mono_s}rho^{gamma}")
        return "SymField[" + " + ".join(bits) + "]"


# -- first order fields ----------------------------------------------------

def apply_T(F: SymField) -> SymField:
    out = {}
    for (mono, gamma), c in F.terms.items():
        if gamma != 0:
            key = (mono, gamma - 1)
            out[key] = out.get(key, ZERO) + c * CRat(gamma)
    return SymField(F.surface, out)


def apply_Z(j: int, F: SymField) -> SymField:
    """Z_j = d/dz_j + i (dP_j/dz_j) d/dt, exact on the closed algebra."""
    S = F.surface
    out = SymField.zero(S)
    for (mono, gamma), c in F.terms.items():
        aj, bj = mono[j - 1]
        if aj > 0:
            m2 = list(mono)
            m2[j - 1] = (aj - 1, bj)
            out = out + SymField.monomial(S, m2, gamma, c * aj)
        if gamma != 0:
            # Z_j rho^gamma = 2i gamma (dP_j/dz_j) rho^(gamma-1)
            base = SymField.monomial(S, mono, gamma - 1, c * CRat(gamma) * CRat(0, 2))
            out = out + base.mul_factor_poly(j, S.p_z[j - 1])
    return out


def apply_Zbar(j: int, F: SymField) -> SymField:
    """Zbar_j = d/dzbar_j - i (dP_j/dzbar_j) d/dt; annihilates rho."""
    S = F.surface
    out = SymField.zero(S)
    for (mono, gamma), c in F.terms.items():
        aj, bj = mono[j - 1]
        if bj > 0:
            m2 = list(mono)
            m2[j - 1] = (aj, bj - 1)
            out = out + SymField.monomial(S, m2, gamma, c * bj)
    return out


def box(j: int, sign: str, F: SymField) -> SymField:
    """box_j^{(+)} = -Zbar_j Z_j  /  box_j^{(-)} = -Z_j Zbar_j."""
    if sign == "+":
        return -apply_Zbar(j, apply_Z(j, F))
    if sign == "-":
        return -apply_Z(j, apply_Zbar(j, F))
    raise ValueError("sign must be '+' or '-'")


def box_J(J, F: SymField) -> SymField:
    """Sum over k of box_k^{(+ if k in J else -)}; J holds 1-based indices."""
    J = set(J)
    out = SymField.zero(F.surface)
    for k in range(1, F.surface.n + 1):
        out = out + box(k, "+" if k in J else "-", F)
    return out


def commutator_defect(j: int, surface: DecoupledSurface):
    """Verify (box_j^- - box_j^+) = 2i lambda_j T on a panel of generic terms.

    Returns the multiplier polynomial 2i*lambda_j (as a WPoly in z_j); raises
    IdentityViolated with the offending term otherwise.
    """
    lam = surface.levis[j - 1].inner
    mult = lam.scale(CRat(0, 2))  # 2i lambda_j
    panel = []
    for aj in range(0, 3):
        for bj in range(0, 3):
            for gamma in (Fraction(0), Fraction(1), Fraction(2), Fraction(1, 2),
                          Fraction(-3, 4)):
                mono = [(0, 0)] * surface.n
                mono[j - 1] = (aj, bj)
                if surface.n > 1:
                    mono[(j % surface.n)] = (1, 1)
                panel.append(SymField.monomial(surface, mono, gamma, CRat(1, 1)))
    for F in panel:
        lhs = box(j, "-", F) - box(j, "+", F)
        rhs = apply_T(F).mul_factor_poly(j, mult)
        if not (lhs - rhs).is_zero():
            raise IdentityViolated(f"defect mismatch on term {F!r}")
    return mult


# -- forms -----------------------------------------------------------------

class FormQ:
    """(0,q)-form: map from strictly increasing 1-based index tuples J to SymField."""

    __slots__ = ("surface", "q", "comps")

    def __init__(self, surface: DecoupledSurface, q: int, comps=None):
        self.surface = surface
        self.q = q
        cl = {}
        if comps:
            for J, F in comps.items():
                J = tuple(J)
                if len(J) != q or list(J) != sorted(set(J)):
                    raise ValueError(f"bad index tuple {J}")
                if any(not (1 <= j <= surface.n) for j in J):
                    raise ValueError(f"index out of range in {J}")
                if not F.is_zero():
                    cl[J] = F
        self.comps = cl

    @staticmethod
    def from_function(F: SymField) -> "FormQ":
        return FormQ(F.surface, 0, {(): F})

    def is_zero(self):
        return not self.comps

    def __add__(self, other):
        out = dict(self.comps)
        for J, F in other.comps.items():
            out[J] = out[J] + F if J in out else F
        return FormQ(self.surface, self.q, out)

    def __sub__(self, other):
        return self + FormQ(other.surface, other.q,
                            {J: -F for J, F in other.comps.items()})

    def __eq__(self, other):
        return (isinstance(other, FormQ) and self.q == other.q
                and self.comps == other.comps)


def _insert_sign(j: int, J) -> int:
    """Sign of dzbar_j wedge dzbar_J relative to sorted order."""
    before = sum(1 for k in J if k < j)
    return -1 if before % 2 else 1


def dbar_b(f: FormQ) -> FormQ:
    S = f.surface
    out = {}
    for J, F in f.comps.items():
        for j in range(1, S.n + 1):
            if j in J:
                continue
            G = apply_Zbar(j, F)
            if G.is_zero():
                continue
            sign = _insert_sign(j, J)
            if sign < 0:
                G = -G
            L = tuple(sorted(J + (j,)))
            out[L] = out[L] + G if L in out else G
    return FormQ(S, f.q + 1, out)


def dbar_b_star(f: FormQ) -> FormQ:
    """Formal adjoint in the frame where the dzbar_J are orthonormal.

    Uses (Zbar_j)* = -Z_j, so on one-variable (0,1)-forms
    dbar_b_star[g dzbar] = -Z[g].
    """
    S = f.surface
    if f.q == 0:
        # no (0,-1)-forms; the adjoint kills functions
        return FormQ(S, 0)
    out = {}
    for L, F in f.comps.items():
        for j in L:
            J = tuple(k for k in L if k != j)
            G = -apply_Z(j, F)
            if G.is_zero():
                continue
            sign = _insert_sign(j, J)
            if sign < 0:
                G = -G
            out[J] = out[J] + G if J in out else G
    return FormQ(S, f.q - 1, out)


def box_b(f: FormQ) -> FormQ:
    """Kohn Laplacian dbar_b dbar_b* + dbar_b* dbar_b on (0,q)-forms."""
    if f.q == 0:
        return dbar_b_star(dbar_b(f))
    return dbar_b(dbar_b_star(f)) + dbar_b_star(dbar_b(f))


# -- evaluation ------------------------------------------------------------

def evaluate(F: SymField, z, t: float) -> complex:
    """Principal-branch numeric evaluation of a SymField at (z, t)."""
    S = F.surface
    z = [complex(v) for v in z]
    phi = S.phi(z)
    w = complex(t, phi)
    total = 0j
    for (mono, gamma), c in F.terms.items():
        monoval = 1 + 0j
        for (a, b), zj in zip(mono, z):
            monoval *= zj**a * zj.conjugate()**b
        if gamma == 0:
            wpow = 1 + 0j
        elif w == 0:
            if gamma > 0:
                wpow = 0j
            else:
                raise BranchSingularity(f"rho^({gamma}) at rho = 0")
        else:
            g = float(gamma)
            if gamma.denominator == 1:
                wpow = w**gamma.numerator
            else:
                if phi == 0 and t < 0:
                    # on the branch cut for non-integer powers
                    raise BranchSingularity(f"rho^({gamma}) on the negative real axis")
                wpow = cmath.exp(g * cmath.log(w))
        total += c.to_complex() * monoval * wpow
    return total


def F_gamma(surface: DecoupledSurface, gamma) -> SymField:
    """The model family (t + i Phi(z))^gamma."""
    return SymField.rho_power(surface, gamma)


def translate_t(F: SymField, s) -> SymField:
    """Shift t -> t + s for terms with nonnegative integer gamma (binomial)."""
    import math as _math
    S = F.surface
    s = CRat.of(s)
    out = SymField.zero(S)
    for (mono, gamma), c in F.terms.items():
        if gamma.denominator != 1 or gamma < 0:
            raise ValueError("translate_t needs nonnegative integer exponents")
        g = gamma.numerator
        for k in range(g + 1):
            from .sympoly import _cpow
            coeff = c * CRat.of(_math.comb(g, k)) * _cpow(s, g - k)
            out = out + SymField.monomial(S, mono, Fraction(k), coeff)
    return out
