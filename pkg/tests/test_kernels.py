import math

import numpy as np
import pytest

from kohnlab import crfield as cf
from kohnlab import spectral as sx
from kohnlab import kernels as kx


S24 = cf.standard_surface(2, 4)
# quadratic-only two-factor surface: null spectra are machine-exact at N=32,
# which keeps the kernel-identity residuals at rounding level
SQQ = cf.DecoupledSurface([S24.factors[0], S24.factors[0]])
TAUS = sx.uniform_tau_grid(2.0, 8)


@pytest.fixture(scope="module")
def cache():
    return kx.EigenCache(SQQ, N=32, k_max=16, dense=True, drop_edge=True)


@pytest.fixture(scope="module")
def fs(cache):
    return kx.build_factor_spectra(SQQ, J=(), tau_grid=TAUS, cache=cache)


@pytest.fixture(scope="module")
def pairs(fs):
    ax = fs.es(1, 5).grid.axis()
    z = (complex(ax[10], ax[12]), complex(ax[13], ax[15]))
    w = (complex(ax[20], ax[14]), complex(ax[18], ax[16]))
    return [((z, (0.0, 0.0)), (w, (0.1, 0.05))),
            ((z, (0.2, -0.1)), (z, (0.0, 0.0)))]


def test_decomposition_residuals(fs):
    d = kx.decomposition_check(fs)
    assert d["first0_residual"] == 0.0
    assert d["first_residual"] < 1e-8
    assert d["first2_residual"] < 1e-8
    assert d["n_tuples"] > 0


def test_single_factor_ktilde_is_green_slice(cache):
    S1 = cf.DecoupledSurface([S24.factors[0]])
    c1 = kx.EigenCache(S1, N=32, k_max=16, dense=True, drop_edge=True)
    fs1 = kx.build_factor_spectra(S1, J=(), tau_grid=TAUS, cache=c1)
    es = fs1.es(1, 6)
    gr = sx.green_slice(es)
    K = kx.ktilde(fs1)
    rows, cols = [100, 300], [101, 512]
    ref = gr.kernel_entries(rows, cols)
    ax = es.grid.axis()
    for r, c, v in zip(rows, cols, ref):
        pr = ((complex(ax[r // 32], ax[r % 32]),), (0.0,))
        qc = ((complex(ax[c // 32], ax[c % 32]),), (0.0,))
        got = K.entries((6,), [(pr, qc)])[0]
        assert got == pytest.approx(v, rel=1e-12, abs=1e-14)


def test_lowest_nonnull_tuple_weight_oracle(fs):
    # the relative inverse weight on the lowest all-non-null tuple is
    # exactly 1/(lambda_1 + lambda_2)
    i = 5
    es1, es2 = fs.es(1, i), fs.es(2, i)
    W = kx.ntilde(fs).weights((i, i))
    k1, k2 = es1.null_count, es2.null_count
    lam = es1.lam_effective()[k1] + es2.lam_effective()[k2]
    assert W[k1, k2] == pytest.approx(1.0 / lam, rel=1e-14)
    # null rows/columns carry no weight
    assert np.all(W[:k1, :] == 0.0)
    assert np.all(W[:, :k2] == 0.0)


def test_eps_regularization(fs):
    i = 6
    w0 = kx.ntilde(fs).weights((i, i))
    for eps in (0.0, 0.05, 0.5):
        we = kx.eps_regularized_ntilde(fs, (1, 2), eps).weights((i, i))
        assert np.all(np.abs(we) <= w0 + 1e-15)
        # (1 - e^(-eps*lam))/lam <= eps, uniformly in lam
        assert np.abs(w0 - we).max() <= eps + 1e-15
    assert np.array_equal(
        kx.eps_regularized_ntilde(fs, (1, 2), 0.0).weights((i, i)), w0)


def test_chi_smoothstep():
    assert kx.chi(0.0) == 1.0
    assert kx.chi(0.5) == 1.0
    assert kx.chi(1.0) == 0.0
    assert kx.chi(2.0) == 0.0
    u = np.linspace(0.5, 1.0, 101)
    v = kx.chi(u)
    assert np.all(np.diff(v) <= 1e-15)
    assert kx.chi(0.75) == pytest.approx(0.5)


def test_phi_split_limits(fs, pairs):
    r = kx.phi_split(fs, 1, 1e-3, pairs)
    rho = r["rho"]
    assert np.all(rho > 0)
    # s far below rho^2: the cutoff kills the Szego part entirely
    s_small = 0.5 * float(rho.min()) ** 2
    r = kx.phi_split(fs, 1, s_small, pairs)
    assert np.all(r["chi"] == 0.0)
    assert np.abs(r["S_tilde"]).max() == 0.0
    assert np.array_equal(r["Phi"], r["H"])
    # s at least 2 rho^2: full cutoff, Phi = H - S exactly
    s_big = 2.0 * float(rho.max()) ** 2
    r = kx.phi_split(fs, 1, s_big, pairs)
    assert np.all(r["chi"] == 1.0)
    assert np.abs(r["Phi"] - (r["H"] - r["S"])).max() < 1e-15


def test_k_parts_reassembly(fs, pairs):
    r = kx.k_parts(fs, pairs, n_s=150)
    assert r["relative_residual"] < 1e-10
    # K_inf integrand is (prod chi - 1) in [-1, 0], supported s <= 2 max rho^2
    bound = 2.0 * float((r["rho"] ** 2).max())
    assert np.abs(r["Kinf"]).max() <= 1.05 * bound


def test_descent_cross_validation(fs, pairs):
    pk = kx.eps_regularized_ntilde(fs, (1, 2), 0.5)
    r = kx.descent_cross_validation(pk, pairs)
    assert r["max_rel_diff"] < 1e-12
    d = r["diagonal"]
    assert d.time_values.shape == (len(pairs), len(TAUS))
    assert np.allclose(d.t_grid, r["hyperplane"].t_grid)


def test_descent_singularity_guard(fs, pairs):
    # the unregularized relative inverse has a non-decaying 1/lambda(tau)
    # frequency tail; descending it with a tail check must refuse
    pk = kx.eps_regularized_ntilde(fs, (1, 2), 0.0)
    with pytest.raises(kx.SingularityOnPath):
        kx.descend(pk, pairs, method="diagonal", tail_tol=1e-6)


def test_case_rule_all_sign_patterns(cache):
    for J in ((), (1,), (2,), (1, 2)):
        fsJ = kx.build_factor_spectra(SQQ, J=J, tau_grid=TAUS, cache=cache)
        r = kx.case_rule_241(fsJ)
        assert r["max_residual"] < 1e-8
        assert r["mixed_projection_vanishes"]
        if len(J) in (0, 2):
            # top/bottom degree: the projection term is present on the
            # allowed Fourier side
            assert any(s["projection_nonzero"] for s in r["slices"])


def test_relative_inverse_shape(cache):
    for J in ((), (1,), (1, 2)):
        fsJ = kx.build_factor_spectra(SQQ, J=J, tau_grid=TAUS, cache=cache)
        r = kx.relative_inverse_shape(fsJ)
        assert r["max_residual"] < 1e-8


def test_szego_mix_vanish(cache):
    get = cache.get
    # A inside J or disjoint from J: the product survives; mixed A: vanishes
    for J, A, should in (((1,), (1,), False), ((1,), (2,), False),
                         ((1,), (1, 2), True), ((1, 2), (1, 2), False),
                         ((), (1,), False)):
        r = kx.szego_mix_vanish(get, J, A, TAUS)
        assert r["should_vanish"] == should
        assert r["pass"]


def test_borrowing_identity(fs, pairs):
    r = kx.borrowing_check(fs, pairs)
    assert r["diagonal_residual"] == 0.0
    assert r["hyperplane_relative"] < 1e-6


def test_transference_rank_one(fs):
    # a weight supported on a single diagonal tuple: both norms equal
    target = (5, 5)

    def w(itaus):
        shape = tuple(fs.es(j + 1, itaus[j]).k for j in range(fs.n))
        out = np.zeros(shape)
        if itaus == target:
            out[0, 0] = 2.5
        return out

    np_, nm = kx.transference_norm(w, fs)
    assert np_ == nm == 2.5


def test_transference_trials(fs):
    r = kx.transference_trials(fs, n_trials=20, seed=1)
    assert r["all_pass"]
    assert r["n_pass"] == 20


def test_transference_ntilde(fs):
    np_, nm = kx.transference_norm(kx.ntilde(fs), fs)
    assert 0 < nm <= np_ * (1 + 1e-12)
    assert np.isfinite(np_)


def test_ntilde_derivative_ratios(fs, pairs):
    r = kx.ntilde_derivative_ratios(fs, pairs)
    for key in ((0, 0), (2, 0), (0, 2)):
        assert r[key]["finite"]
        assert r[key]["n"] > 0
        assert r[key]["max_ratio"] < 1e3
