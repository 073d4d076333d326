"""Nonisotropic geometry of a decoupled surface.

Two pseudo-metrics drive everything: the control metric d_Sigma generated by
the real and imaginary parts of the CR fields, and the Szego metric d_S whose
balls are isotropic in t.  The dictionary between them is the degeneracy
polynomial Lambda_j(p, delta) = sum_k Lambda_j^k(p) delta^k and its monotone
inverse mu_j.  All "approximately equal" objects from the theory are
implemented as their explicit right-hand sides; equivalence constants are
measured by the calling test harness, never assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sympoly import WPoly, RealWPoly, CRat
from .crfield import DecoupledSurface


class DegenerateProfile(Exception):
    pass


@dataclass(frozen=True)
class PointM:
    z: tuple          # complex, one per factor
    t: float

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(complex(v) for v in self.z))


@dataclass(frozen=True)
class PointProd:
    z: tuple
    t: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(complex(v) for v in self.z))
        object.__setattr__(self, "t", tuple(float(v) for v in self.t))


@dataclass
class LambdaProfile:
    point: complex
    coeffs: np.ndarray    # index k-2 holds Lambda^k, k = 2..m

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if (self.coeffs < 0).any():
            raise ValueError("Lambda coefficients must be nonnegative")


def _word_polys(S: DecoupledSurface, j: int):
    """All derivative words X^alpha lambda_j up to length m_j - 2.

    X_j and X_{n+j} act on functions of z_j alone as d/dx and d/dy; the
    t-components of the vector fields annihilate lambda_j, which only depends
    on z_j.  Returns a list of lists: words[l] = the 2^l polynomials of
    length l.  Cached on the surface instance.
    """
    cache = getattr(S, "_word_cache", None)
    if cache is None:
        cache = {}
        S._word_cache = cache
    if j in cache:
        return cache[j]

    def dx(p: WPoly) -> WPoly:
        return p.dz() + p.dzbar()

    def dy(p: WPoly) -> WPoly:
        return (p.dz() - p.dzbar()).scale(CRat(0, 1))

    lam = S.levis[j - 1].inner
    m = S.degrees[j - 1]
    words = [[lam]]
    for _ in range(m - 2):
        nxt = []
        for p in words[-1]:
            nxt.append(dx(p))
            nxt.append(dy(p))
        words.append(nxt)
    cache[j] = words
    return words


def lambda_profile(S: DecoupledSurface, j: int, p: complex) -> LambdaProfile:
    """Lambda_j^k(p) = sum over words of length <= k-2 of |X^alpha lambda_j(p)|."""
    words = _word_polys(S, j)
    m = S.degrees[j - 1]
    p = complex(p)
    level_sums = [sum(abs(w.evaluate(p)) for w in lvl) for lvl in words]
    coeffs = np.cumsum(level_sums)        # index k-2: sum over lengths <= k-2
    return LambdaProfile(point=p, coeffs=coeffs[: m - 1])


def Lambda(S: DecoupledSurface, j: int, p: complex, delta: float) -> float:
    if delta < 0:
        raise ValueError("delta must be >= 0")
    prof = lambda_profile(S, j, p)
    return _Lambda_of(prof, delta)


def _Lambda_of(prof: LambdaProfile, delta: float) -> float:
    d = abs(delta)
    return float(sum(c * d ** (k + 2) for k, c in enumerate(prof.coeffs)))


def mu_of_profile(prof: LambdaProfile, delta: float, iters: int = 60) -> float:
    """Monotone inverse of delta -> Lambda(prof, delta) by bisection."""
    if not (prof.coeffs > 0).any():
        raise DegenerateProfile(f"all Lambda coefficients vanish at {prof.point}")
    if delta == 0:
        return 0.0
    if delta < 0:
        raise ValueError("delta must be >= 0")
    hi = 1.0
    grow = 0
    while _Lambda_of(prof, hi) < delta:
        hi *= 2.0
        grow += 1
        if grow > 400:
            raise DegenerateProfile("Lambda fails to reach target")
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _Lambda_of(prof, mid) < delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mu(S: DecoupledSurface, j: int, p: complex, delta: float) -> float:
    return mu_of_profile(lambda_profile(S, j, p), delta)


def mu_equiv_ratio(S: DecoupledSurface, j: int, p: complex, delta: float) -> float:
    """Ratio mu^-1 / sum_k (Lambda^k)^(1/k) delta^(-1/k) (should be ~1)."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    prof = lambda_profile(S, j, p)
    m = mu_of_profile(prof, delta)
    rhs = sum(c ** (1.0 / (k + 2)) * delta ** (-1.0 / (k + 2))
              for k, c in enumerate(prof.coeffs) if c > 0)
    return (1.0 / m) / rhs


def mu_sharp(S: DecoupledSurface, j: int, p: complex, delta: float) -> float:
    """mu#(p,delta)^2 = delta * int_delta^1 mu(p,t)^2 dt/t^2, by log-panel quadrature."""
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0,1)")
    prof = lambda_profile(S, j, p)
    # substitute t = e^u: integrand mu(e^u)^2 e^-u on [ln delta, 0]
    lo, hi = math.log(delta), 0.0
    n_panel = max(24, int(8 * (hi - lo)))
    xg, wg = np.polynomial.legendre.leggauss(8)
    total = 0.0
    edges = np.linspace(lo, hi, n_panel + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for x, w in zip(xg, wg):
            u = mid + half * x
            t = math.exp(u)
            total += w * half * mu_of_profile(prof, t) ** 2 / t
    return math.sqrt(delta * total)


def t_twist(S: DecoupledSurface, j: int, w: complex, z: complex) -> float:
    """2 Im[sum_k (d^k P_j/dz^k)(w) (z-w)^k / k!]."""
    w = complex(w)
    z = complex(z)
    p = S.factors[j - 1].inner
    total = 0j
    dk = p
    fact = 1.0
    for k in range(1, S.degrees[j - 1] + 1):
        dk = dk.dz()
        if dk.is_zero():
            break
        fact *= k
        total += dk.evaluate(w) * (z - w) ** k / fact
    return 2.0 * total.imag


def _twist_sum(S, zs, ws) -> float:
    return sum(t_twist(S, j + 1, ws[j], zs[j]) for j in range(S.n))


def dist_factor(S: DecoupledSurface, j: int, p, q) -> float:
    """Canonical factor pseudo-distance |z-w| + mu_j(w, |t-s-T_j(w,z)|)."""
    (z, t), (w, s) = p, q
    u = abs(t - s - t_twist(S, j, w, z))
    return abs(z - w) + mu(S, j, w, u)


def dist_sigma(S: DecoupledSurface, p: PointM, q: PointM) -> float:
    u = abs(p.t - q.t - _twist_sum(S, p.z, q.z))
    zpart = sum(abs(a - b) for a, b in zip(p.z, q.z))
    mus = [mu(S, j + 1, q.z[j], u) for j in range(S.n)]
    return zpart + min(mus)


def dist_sigma_prod(S: DecoupledSurface, p: PointProd, q: PointProd) -> float:
    return sum(dist_factor(S, j + 1, (p.z[j], p.t[j]), (q.z[j], q.t[j]))
               for j in range(S.n))


def dist_szego(S: DecoupledSurface, p: PointM, q: PointM) -> float:
    u = abs(p.t - q.t - _twist_sum(S, p.z, q.z))
    return u + sum(Lambda(S, j + 1, q.z[j], abs(p.z[j] - q.z[j]))
                   for j in range(S.n))


def vol_sigma(S: DecoupledSurface, w: PointM, delta: float) -> float:
    """|B_Sigma(w,delta)| representative: delta^(2n) sum_j Lambda_j(w_j,delta)."""
    if delta == 0:
        return 0.0
    return abs(delta) ** (2 * S.n) * sum(
        Lambda(S, j + 1, w.z[j], abs(delta)) for j in range(S.n))


def vol_szego(S: DecoupledSurface, p: PointM, delta: float) -> float:
    """|B_S(p,delta)| representative: delta * prod_j mu_j(p_j,delta)."""
    if delta == 0:
        return 0.0
    out = abs(delta)
    for j in range(S.n):
        out *= mu(S, j + 1, p.z[j], abs(delta))
    return out


@dataclass
class NormalizationData:
    center: PointM
    surface: DecoupledSurface           # the recentered, pure-jet-free surface
    removed_jets: list = field(default_factory=list)  # per factor: WPoly of dropped pure terms


def normalize_at(S: DecoupledSurface, w: PointM) -> NormalizationData:
    """Recenter at w and drop the pure (harmonic) jet of each factor.

    The resulting P_j^w have only mixed monomials z^k zbar^l with k,l >= 1, so
    all pure derivatives vanish at 0; the Levi function is exactly translated.
    """
    new_factors = []
    jets = []
    for j in range(S.n):
        shifted = S.factors[j].inner.shift(CRat.of(complex(w.z[j])))
        mixed = {}
        pure = {}
        for (a, b), c in shifted.coeffs.items():
            if a >= 1 and b >= 1:
                mixed[(a, b)] = c
            else:
                pure[(a, b)] = c
        new_factors.append(RealWPoly(WPoly(mixed)))
        jets.append(WPoly(pure))
    return NormalizationData(center=w,
                             surface=DecoupledSurface(new_factors,
                                                      check_admissible=False),
                             removed_jets=jets)


def ball_inclusion_check(S: DecoupledSurface, q: PointM, delta: float,
                         n_samples: int = 10000, slack: float = None,
                         seed: int = 0) -> dict:
    """Sandwich and ball-inclusion sampling check.

    For random points p near q it verifies, with a slack constant C:
      min_j Lambda_j(q_j, d_Sigma(p,q)) <= C d_S(p,q) <= C^2 max_j Lambda_j(q_j, d_Sigma)
    and the two ball inclusions it encodes.  Returns the violation count at
    the given slack and the tightest constants observed.
    """
    if slack is None:
        slack = 4.0 * max(S.degrees)
    if delta == 0:
        # zero radius: both balls are the point itself, nothing to sample
        return {"n_samples": 0, "violations": 0, "slack": slack,
                "tightest_lower": 0.0, "tightest_upper": 0.0}
    rng = np.random.default_rng(seed)
    lam_scale = max(Lambda(S, j + 1, q.z[j], delta) for j in range(S.n))
    lam_scale = max(lam_scale, 1e-300)
    viol = 0
    c_lo = 0.0   # tightest constant for min Lambda(d_Sigma) <= C d_S
    c_hi = 0.0   # tightest constant for d_S <= C max Lambda(d_Sigma)
    checked = 0
    for _ in range(n_samples):
        scale = delta * 10.0 ** rng.uniform(-2, 0)
        z = tuple(q.z[j] + scale * rng.uniform(0.1, 1.0)
                  * np.exp(2j * np.pi * rng.uniform())
                  for j in range(S.n))
        t = q.t + rng.uniform(-1, 1) * lam_scale * 10.0 ** rng.uniform(-2, 0.5)
        p = PointM(z, t)
        dSig = dist_sigma(S, p, q)
        dS = dist_szego(S, p, q)
        if dSig == 0 or dS == 0:
            continue
        checked += 1
        lam_at = [Lambda(S, j + 1, q.z[j], dSig) for j in range(S.n)]
        lo, hi = min(lam_at), max(lam_at)
        r1 = lo / dS
        r2 = dS / hi if hi > 0 else np.inf
        c_lo = max(c_lo, r1)
        c_hi = max(c_hi, r2)
        if r1 > slack or r2 > slack:
            viol += 1
    return {"n_samples": checked, "violations": viol, "slack": slack,
            "tightest_lower": c_lo, "tightest_upper": c_hi}


def frac_kernel_compare(S: DecoupledSurface, p: PointM, q: PointM,
                        alpha: float = 0.0) -> float:
    """Ratio [d_Sigma^a / |B_Sigma(q,d_Sigma)|] / [(max mu_j(q,d_S))^a / |B_S(q,d_S)|]."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    dSig = dist_sigma(S, p, q)
    dS = dist_szego(S, p, q)
    if dSig == 0 or dS == 0:
        raise ValueError("coincident points")
    lhs = dSig ** alpha / vol_sigma(S, q, dSig)
    mu_max = max(mu(S, j + 1, q.z[j], dS) for j in range(S.n))
    rhs = mu_max ** alpha / vol_szego(S, q, dS)
    return lhs / rhs
