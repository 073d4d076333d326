import math

import numpy as np
import pytest

from kohnlab.crfield import standard_surface
from kohnlab import spectral as sx


S24 = standard_surface(2, 4)


@pytest.fixture(scope="module")
def landau48():
    g = sx.choose_grid(S24, 1, 1.0, N=48)
    op = sx.build_twisted(S24, 1, "-", 1.0, g)
    return op, sx.eigensystem(op, k_max=40)


def test_grid_spec_basics():
    g = sx.GridSpec(L=2.0, N=32)
    assert g.h == pytest.approx(4.0 / 31)
    assert g.size == 1024
    z = g.zflat()
    assert z[0] == pytest.approx(-2.0 - 2.0j)
    assert z[-1] == pytest.approx(2.0 + 2.0j)
    x = g.axis()
    zc = complex(x[5], x[20])
    assert g.index_of(zc + (0.3 + 0.3j) * g.h) == 5 * 32 + 20
    with pytest.raises(ValueError):
        sx.GridSpec(L=1.0, N=8)


def test_choose_grid_scales_with_tau():
    # homogeneous factor of degree m: L(tau) = L(1) * tau^(-1/m)
    for j, m in ((1, 2), (2, 4)):
        L1 = sx.choose_grid(S24, j, 1.0).L
        L4 = sx.choose_grid(S24, j, 4.0).L
        assert L4 == pytest.approx(L1 * 4.0 ** (-1.0 / m), rel=1e-10)


def test_operator_is_hermitian_psd(landau48):
    op, _ = landau48
    H = op.A - op.A.getH()
    assert abs(H).max() < 1e-12
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = rng.standard_normal(op.grid.size) + 1j * rng.standard_normal(op.grid.size)
        assert (v.conj() @ (op.A @ v)).real > -1e-10 * np.linalg.norm(v) ** 2


def test_landau_null_modes_machine_zero(landau48):
    _, es = landau48
    # lowest ten eigenvalues sit at the bottom level (zero after gauge shift),
    # within half a percent of the level unit 4 pi tau
    assert es.null_count >= 10
    unit = 4 * math.pi
    assert np.all(es.eigenvalues[:10] < 0.005 * unit)
    assert np.all(es.eigenvalues[:10] < 1e-10)


def test_first_gap_via_commutator(landau48):
    op, es = landau48
    # <phi|DD* - D*D|phi> = 4 pi tau on the bottom level; evaluate on the
    # null projection of the analytic ground state to avoid boundary-squeezed
    # members of the degenerate cluster
    z = op.grid.zflat()
    psi = np.exp(-math.pi * np.abs(z) ** 2)
    V = es.vectors[:, :es.null_count]
    phi = V @ (V.conj().T @ psi)
    phi /= np.linalg.norm(phi)
    comm = (phi.conj() @ (op.D @ (op.D.getH() @ phi))
            - phi.conj() @ (op.A @ phi)).real
    assert comm == pytest.approx(4 * math.pi, rel=0.02)


def test_dilation_law_quartic():
    # degree-4 factor: lambda_k(tau) = tau^(1/2) lambda_k(1) with the
    # covariant box rule
    lam1 = sx.eigensystem(
        sx.build_twisted(S24, 2, "-", 1.0, sx.choose_grid(S24, 2, 1.0, N=48)),
        k_max=30).eigenvalues
    for tau in (0.25, 4.0):
        lam = sx.eigensystem(
            sx.build_twisted(S24, 2, "-", tau, sx.choose_grid(S24, 2, tau, N=48)),
            k_max=30).eigenvalues
        pred = tau ** 0.5 * lam1
        nz = pred > 1e-6
        assert nz.any()
        assert np.max(np.abs(lam[nz] - pred[nz]) / pred[nz]) < 0.01


def test_forbidden_side_has_no_null_modes():
    for j in (1, 2):
        es = sx.eigensystem(
            sx.build_twisted(S24, j, "-", -1.0, sx.choose_grid(S24, j, -1.0, N=48)),
            k_max=30)
        assert es.null_count == 0
        assert es.n_artifacts > 0          # doublers were present and removed


def test_fourier_support_dichotomy_small_grid():
    taus = [-1.0, -0.25, 0.25, 1.0]
    r = sx.fourier_support_check(S24, 1, "-", taus, N=48, k_max=30)
    assert r["pass"]
    assert all(r["null_counts"][t] == 0 for t in taus if t < 0)
    assert all(r["null_counts"][t] > 0 for t in taus if t > 0)
    r = sx.fourier_support_check(S24, 1, "+", taus, N=48, k_max=30)
    assert r["pass"]
    assert all(r["null_counts"][t] > 0 for t in taus if t < 0)


def test_tau_zero_is_null_free():
    es = sx.eigensystem(
        sx.build_twisted(S24, 1, "-", 0.0, sx.GridSpec(1.75, 32)), k_max=12)
    assert es.null_count == 0
    assert es.eigenvalues.min() > 0.01


def test_grid_too_small_guard():
    with pytest.raises(sx.GridTooSmall):
        sx.build_twisted(S24, 1, "-", 1.0, sx.GridSpec(0.2, 16))


def test_slice_invariants(landau48):
    _, es = landau48
    sz = sx.szego_slice(es)
    # projector coefficients: idempotent and only on the null cluster
    assert np.all(sz.weights[:es.null_count] == 1.0)
    assert np.all(sz.weights[es.null_count:] == 0.0)
    h1, h2, h3 = (sx.heat_slice(es, s) for s in (0.3, 0.7, 1.0))
    assert np.abs(h1.weights * h2.weights - h3.weights).max() < 1e-12
    assert np.all(sx.heat_slice(es, 0.0).weights == 1.0)
    gr = sx.green_slice(es)
    lam = es.lam_effective()
    # box . green + szego = identity on the retained basis
    assert np.abs(gr.weights * lam + sz.weights - 1.0).max() < 1e-12


def test_szego_projector_matrix():
    es = sx.eigensystem(
        sx.build_twisted(S24, 1, "-", 1.0, sx.choose_grid(S24, 1, 1.0, N=32)),
        k_max=30)
    P = sx.szego_slice(es).op_matrix()
    assert np.abs(P - P.conj().T).max() < 1e-12
    assert np.abs(P @ P - P).max() < 1e-10


def test_kernel_entries_match_op_matrix(landau48):
    _, es = landau48
    h = sx.heat_slice(es, 0.5)
    M = h.op_matrix()
    rows = [10, 200, 1500]
    cols = [11, 210, 900]
    vals = h.kernel_entries(rows, cols)
    for r, c, v in zip(rows, cols, vals):
        assert v == pytest.approx(M[r, c] / es.grid.h ** 2, rel=1e-10, abs=1e-14)


def test_apply_matches_spectral_sum(landau48):
    _, es = landau48
    h = sx.heat_slice(es, 0.2)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(es.grid.size)
    out = h.apply(v)
    ref = es.vectors @ (np.exp(-0.2 * es.lam_effective())
                        * (es.vectors.conj().T @ v))
    assert np.abs(out - ref).max() < 1e-10


def test_default_tau_grid_shape():
    g = sx.default_tau_grid()
    assert len(g) == 33
    assert g[16] == 0.0
    assert np.allclose(g, -g[::-1])
    assert g[-1] == pytest.approx(4.0)
    assert g[17] == pytest.approx(0.01)


def test_inverse_ft_gaussian_oracle():
    # fhat(tau) = exp(-pi tau^2)  <->  f(t) = exp(-pi t^2)
    taus = np.linspace(-6, 6, 601)
    vals = np.exp(-math.pi * taus ** 2)
    t = np.array([0.0, 0.3, 1.0, -0.7])
    out = sx.inverse_ft(taus, vals, t)
    assert np.abs(out - np.exp(-math.pi * t ** 2)).max() < 1e-12


def test_inverse_ft_tail_guard():
    taus = np.linspace(-1, 1, 41)
    vals = 1.0 / (1.0 + taus ** 2)       # heavy tails, badly truncated
    with pytest.raises(sx.TailTruncation):
        sx.inverse_ft(taus, vals, [0.0], tail_tol=1e-6)


def test_high_freq_fraction_separates():
    N = 32
    x = np.arange(N)
    smooth = np.outer(np.sin(math.pi * (x + 1) / (N + 1)),
                      np.sin(math.pi * (x + 1) / (N + 1))).ravel()
    saw = np.outer(np.sin(math.pi * (N - 1) * (x + 1) / (N + 1)),
                   np.sin(math.pi * (x + 1) / (N + 1))).ravel()
    assert sx.high_freq_fraction(smooth, N) < 0.05
    assert sx.high_freq_fraction(saw, N) > 0.95


def test_edge_mass_separates():
    N = 32
    g = sx.GridSpec(1.0, N)
    z = g.zflat()
    bulk = np.exp(-8 * np.abs(z) ** 2)
    ring = np.exp(-8 * (np.abs(z) - 1.2) ** 2)
    assert sx.edge_mass(bulk, N) < 0.05
    assert sx.edge_mass(ring, N) > 0.7


def test_grid_convergence_of_low_spectrum():
    lam = {}
    for N in (32, 64):
        es = sx.eigensystem(
            sx.build_twisted(S24, 1, "-", 1.0, sx.choose_grid(S24, 1, 1.0, N=N)),
            k_max=30)
        # compare the null counts and the scale of the retained band
        lam[N] = es
    assert lam[32].null_count > 0 and lam[64].null_count > 0
    assert lam[32].eigenvalues[:10].max() < 1e-8
    assert lam[64].eigenvalues[:10].max() < 1e-10


def test_slice_cache_round_trip(tmp_path, landau48):
    _, es = landau48
    for sl in (sx.heat_slice(es, 0.37), sx.szego_slice(es), sx.green_slice(es)):
        p = tmp_path / f"{sl.kind}.klsl"
        sx.save_slice(p, sl)
        back = sx.load_slice(p)
        assert back.kind == sl.kind
        assert back.tau == sl.tau
        assert back.s == sl.s
        assert back.grid.N == sl.grid.N
        assert back.grid.L == pytest.approx(sl.grid.L)
        assert np.array_equal(back.weights, sl.weights)
        assert np.array_equal(back.basis, sl.basis)


def test_gdecay_ratio_finite():
    pairs = [((0.1 + 0.2j, 0.0), (0.3 - 0.1j, 0.1)),
             ((0.0 + 0.0j, 0.0), (0.5 + 0.0j, -0.2))]
    r = sx.gdecay_check(S24, 1, pairs, s_list=[0.5, 1.0, 2.0],
                        tau_grid=sx.default_tau_grid(T=2.0, n_half=10),
                        N=32, k_max=24)
    assert r["finite"]
    assert r["n_checked"] > 0
    assert r["max_ratio"] < 1e3
