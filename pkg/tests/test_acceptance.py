"""End-to-end acceptance checks for the whole package.

Each test pins one headline claim at its stated tolerance: the exact symbolic
complex, the metric geometry, the spectral oracles, the kernel algebra, the
envelope estimates, the isotropic Holder gain, and the optimality of the
model family.
"""

import itertools
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from kohnlab.sympoly import CRat, WPoly, RealWPoly
from kohnlab.crfield import (DecoupledSurface, SymField, FormQ,
                             standard_surface, box, box_J, box_b,
                             commutator_defect, dbar_b, F_gamma)
from kohnlab.geometry import (PointM, Lambda, mu, mu_equiv_ratio,
                              ball_inclusion_check)
from kohnlab import spectral as sx
from kohnlab import kernels as kx
from kohnlab import harness as hx


S24 = standard_surface(2, 4)


def _random_surface(rng):
    pool = [RealWPoly.abs_pow(2), RealWPoly.abs_pow(4), RealWPoly.abs_pow(6),
            RealWPoly.abs_pow(2) + RealWPoly.abs_pow(4)]
    return DecoupledSurface([rng.choice(pool)
                             for _ in range(rng.randrange(1, 4))])


def _random_field(rng, S):
    terms = {}
    for _ in range(3):
        mono = tuple((rng.randrange(0, 3), rng.randrange(0, 3))
                     for _ in range(S.n))
        gamma = Fraction(rng.randrange(-4, 5), rng.choice([1, 1, 2, 4]))
        c = CRat(Fraction(rng.randrange(-5, 6), rng.randrange(1, 4)),
                 Fraction(rng.randrange(-5, 6), rng.randrange(1, 4)))
        terms[(mono, gamma)] = terms.get((mono, gamma), CRat(0)) + c
    return SymField(S, terms)


def test_criterion_1_exact_symbolic_suite():
    t0 = time.monotonic()
    rng = random.Random(20260825)

    # complex property: dbar_b^2 = 0 on 100 random forms, n <= 3
    for _ in range(100):
        S = _random_surface(rng)
        q = rng.randrange(0, S.n)
        comps = {J: _random_field(rng, S) for J in
                 itertools.combinations(range(1, S.n + 1), q)}
        assert dbar_b(dbar_b(FormQ(S, q, comps))).is_zero()

    # diagonal action of the Laplacian on single-component forms
    for q in range(0, 3):
        for J in itertools.combinations((1, 2), q):
            f = _random_field(rng, S24)
            lhs = box_b(FormQ(S24, q, {J: f}))
            assert lhs.comps.get(J, SymField.zero(S24)) == box_J(set(J), f)

    # reordering defect of the good pair is exactly 2i lambda_k T
    for k, factor in enumerate(S24.factors):
        mult = commutator_defect(1, DecoupledSurface([factor]))
        assert mult == WPoly.const(CRat(0, 2)) * S24.levis[k].inner

    # the model family is annihilated by every '-'-box, exactly
    for g in (Fraction(1, 2), Fraction(1, 4), Fraction(2)):
        F = F_gamma(S24, g)
        assert box(1, "-", F).is_zero()
        assert box(2, "-", F).is_zero()
    assert time.monotonic() - t0 < 10.0


def test_criterion_2_geometry_oracles():
    t0 = time.monotonic()
    rng = random.Random(7)

    # mu is the exact monotone inverse of Lambda: 1e3 round trips at 1e-10
    for _ in range(1000):
        j = rng.randrange(1, 3)
        p = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        d = 10 ** rng.uniform(-5, 1)
        assert abs(Lambda(S24, j, p, mu(S24, j, p, d)) / d - 1) < 1e-10

    # the integrated and inverse-polynomial forms of mu agree within the
    # degree-bound window [1/(4m), 4m]
    for _ in range(200):
        j = rng.randrange(1, 3)
        m = S24.degrees[j - 1]
        p = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        d = 10 ** rng.uniform(-4, 0.5)
        r = mu_equiv_ratio(S24, j, p, d)
        assert 1.0 / (4 * m) <= r <= 4 * m

    # ball inclusions: no violations over 10^4 samples at measured slack
    rep = ball_inclusion_check(S24, PointM((0, 0), 0.0), 0.5,
                               n_samples=10000, seed=11)
    assert rep["violations"] == 0
    assert time.monotonic() - t0 < 30.0


def test_criterion_3_spectral_oracles():
    t0 = time.monotonic()

    # quadratic factor, tau = 1, N = 64: the lowest ten modes sit on the
    # bottom Landau level, within 0.5% of the level unit 4 pi tau
    g = sx.choose_grid(S24, 1, 1.0, N=64)
    es = sx.eigensystem(sx.build_twisted(S24, 1, "-", 1.0, g), k_max=30)
    unit = 4 * math.pi
    assert es.null_count >= 10
    assert np.all(es.eigenvalues[:10] < 0.005 * unit)

    # quartic factor: exact dilation law within 1%
    lam1 = sx.eigensystem(
        sx.build_twisted(S24, 2, "-", 1.0, sx.choose_grid(S24, 2, 1.0, N=48)),
        k_max=30).eigenvalues
    for tau in (0.25, 4.0):
        lam = sx.eigensystem(
            sx.build_twisted(S24, 2, "-", tau,
                             sx.choose_grid(S24, 2, tau, N=48)),
            k_max=30).eigenvalues
        pred = tau ** 0.5 * lam1
        nz = pred > 1e-6
        assert np.max(np.abs(lam[nz] - pred[nz]) / pred[nz]) < 0.01

    # Fourier-support dichotomy: exact null-count pattern on the full grid
    taus = [-4.0, -1.0, -0.25, 0.25, 1.0, 4.0]
    for j in (1, 2):
        for sign, null_side in (("-", 1), ("+", -1)):
            r = sx.fourier_support_check(S24, j, sign, taus, N=48, k_max=30)
            assert r["pass"]
            for t in taus:
                if t * null_side > 0:
                    assert r["null_counts"][t] > 0
                else:
                    assert r["null_counts"][t] == 0
    assert time.monotonic() - t0 < 300.0


@pytest.fixture(scope="module")
def kernel_fixture():
    return hx._kernel_fixture()


def test_criterion_4_kernel_algebra(kernel_fixture):
    t0 = time.monotonic()
    fs, cache, taus = kernel_fixture

    d = kx.decomposition_check(fs)
    assert d["first0_residual"] < 1e-10
    assert d["first_residual"] < 1e-8
    assert d["first2_residual"] < 1e-8

    # case rule per slice: the mixed projection term vanishes identically
    # for intermediate degrees, with diagonal-method norm exactly 0 off
    # tau = 0
    for J in ((), (1,), (2,), (1, 2)):
        fsJ = kx.build_factor_spectra(fs.surface, J=J, tau_grid=taus,
                                      cache=cache)
        r = kx.case_rule_241(fsJ)
        assert r["max_residual"] < 1e-8
        assert r["mixed_projection_vanishes"]

    ax = fs.es(1, 5).grid.axis()
    z = (complex(ax[10], ax[12]), complex(ax[13], ax[15]))
    w = (complex(ax[20], ax[14]), complex(ax[18], ax[16]))
    pairs = [((z, (0.0, 0.0)), (w, (0.1, 0.05))),
             ((z, (0.2, -0.1)), (z, (0.0, 0.0)))]
    r = kx.borrowing_check(fs, pairs)
    assert r["diagonal_residual"] == 0.0
    assert r["hyperplane_relative"] < 1e-6

    r = kx.transference_trials(fs, n_trials=20, seed=3)
    assert r["all_pass"]
    assert r["n_pass"] == 20
    assert time.monotonic() - t0 < 600.0


def test_criterion_5_envelope_estimates():
    rep = hx.suite_estimates(S24, n_samples=1000, seed=0, refine=True)
    by_id = {c.id: c for c in rep.cases}
    assert rep.passed, [c.id for c in rep.cases if c.status == "FAIL"]
    # >= 10^3 stratified samples, finite max ratio, <= 2x under refinement
    assert math.isfinite(by_id["th244_ratio_max_N48"].measured)
    drift = by_id["th244_refinement_drift"].measured
    assert 0.5 <= drift <= 2.0

    # L1 mass over Szego balls: ratio variation <= 10 across dyadic delta
    rep = hx.suite_l1_modulus(S24, seed=0)
    assert rep.passed, [c.id for c in rep.cases if c.status == "FAIL"]
    var = {c.id: c for c in rep.cases}["l1_ratio_variation"].measured
    assert var <= 10.0


def test_criterion_6_holder_exponent():
    t0 = time.monotonic()
    h = np.geomspace(2e-4, 2e-2, 10)
    mods = hx.holder_bump_moduli(S24, h, T=16384.0, n_tau=131072)
    slope = float(np.polyfit(np.log(h), np.log(mods), 1)[0])
    assert 0.4 <= slope <= 0.6            # target 2/m = 0.5
    assert time.monotonic() - t0 < 600.0


def test_criterion_7_optimality():
    rep = hx.suite_optimality(S24)
    assert rep.passed, [c.id for c in rep.cases if c.status == "FAIL"]
    by_id = {c.id: c for c in rep.cases}
    # exact boundedness cutoff at gamma = 2/m = 1/2
    assert by_id["symbolic_bounded_gamma_1/2"].measured == 1.0
    assert by_id["symbolic_bounded_gamma_49/100"].measured == 0.0
    # L^p sign test at threshold +/- 0.1 for p in {1, 2}
    for p_exp in (1, 2):
        thr = -(1.0 + 0.5 + 1.0) / p_exp
        assert by_id[f"lp_slope_p{p_exp}_gamma_{thr + 0.1:g}"].measured > 0
        assert by_id[f"lp_slope_p{p_exp}_gamma_{thr - 0.1:g}"].measured < 0
