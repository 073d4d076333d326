"""Product kernels, their exact decompositions, and descent.

The relative fundamental solution of a sum of commuting positive operators
has a closed spectral form: with per-factor eigenpairs (lambda_{j,k}, phi_{j,k})
at frequencies tau_j, the s-integral int_0^infty e^{-s Sum lambda} ds collapses
to (Sum lambda)^{-1}.  Every product kernel here is therefore represented by a
weight on tuples ((tau_1,k_1),...,(tau_n,k_n)) together with a null/non-null
pattern per factor, and the decomposition identities become statements about
weights that either cancel exactly (tuple patterns partition) or cancel up to
the null-snapping tolerance.

Descent to the quotient boundary is the pushforward under t = Sum t_j, which
in frequency is restriction to the diagonal tau_1 = ... = tau_n.  The
hyperplane method (explicit convolution over the slicing hyperplane) is kept
as an independent cross-check; on frequency grids with DFT-dual time grids the
two agree to machine precision by the discrete convolution theorem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .crfield import DecoupledSurface
from .geometry import dist_factor, mu, t_twist, Lambda
from . import spectral as sx


class EmptySpectrum(Exception):
    pass


class SingularityOnPath(Exception):
    pass


# -- shared eigensystem cache ---------------------------------------------

@dataclass
class EigenCache:
    """Memoizes per-(factor, sign, tau) eigensystems at a fixed resolution."""
    surface: DecoupledSurface
    N: int = 32
    k_max: int = 24
    dense: bool = True
    drop_edge: bool = True
    systems: dict = field(default_factory=dict)

    def get(self, j: int, sign: str, tau: float) -> sx.EigenSystem:
        key = (j, sign, float(tau))
        if key not in self.systems:
            grid = sx.choose_grid(self.surface, j, tau, N=self.N)
            op = sx.build_twisted(self.surface, j, sign, tau, grid)
            self.systems[key] = sx.eigensystem(
                op, k_max=self.k_max, dense=self.dense,
                drop_edge=self.drop_edge)
        return self.systems[key]


@dataclass
class FactorSpectra:
    """Eigensystems for every factor over a shared tau grid.

    The sign pattern is fixed by J: factor j carries the '+' operator when
    j is in J and the '-' operator otherwise, matching the diagonal action
    of the Kohn Laplacian on (0,q)-forms with component set J.
    """
    surface: DecoupledSurface
    J: frozenset
    tau_grid: np.ndarray
    systems: list                      # systems[j-1][itau] -> EigenSystem

    @property
    def n(self) -> int:
        return self.surface.n

    def sign(self, j: int) -> str:
        return "+" if j in self.J else "-"

    def es(self, j: int, itau: int) -> sx.EigenSystem:
        return self.systems[j - 1][itau]

    @property
    def n_tau(self) -> int:
        return len(self.tau_grid)


def build_factor_spectra(S: DecoupledSurface, J=(), tau_grid=None,
                         N: int = 48, k_max: int = 24,
                         cache: EigenCache = None) -> FactorSpectra:
    if tau_grid is None:
        tau_grid = sx.default_tau_grid()
    tau_grid = np.asarray(tau_grid, dtype=float)
    J = frozenset(J)
    if cache is None:
        cache = EigenCache(S, N=N, k_max=k_max)
    systems = []
    for j in range(1, S.n + 1):
        sign = "+" if j in J else "-"
        systems.append([cache.get(j, sign, tau) for tau in tau_grid])
    fs = FactorSpectra(surface=S, J=J, tau_grid=tau_grid, systems=systems)
    if not any(es.k > es.null_count
               for row in systems for es in row):
        raise EmptySpectrum("no factor has positive spectrum on the tau grid")
    return fs


# -- spectral product kernels ---------------------------------------------

_KINDS = ("Ktilde", "Ntilde", "Ntilde_A", "S_A", "Neps")


@dataclass
class ProductKernel:
    kind: str
    fs: FactorSpectra
    A: frozenset = None                # for Ntilde_A / S_A / Neps
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kind {self.kind}")
        if self.A is not None:
            self.A = frozenset(self.A)

    def _null_masks(self, itaus):
        out = []
        for j in range(1, self.fs.n + 1):
            es = self.fs.es(j, itaus[j - 1])
            m = np.zeros(es.k, dtype=bool)
            m[: es.null_count] = True
            out.append(m)
        return out

    def _lam(self, itaus):
        return [self.fs.es(j, itaus[j - 1]).lam_effective()
                for j in range(1, self.fs.n + 1)]

    def weights(self, itaus) -> np.ndarray:
        """Weight tensor over eigenindex tuples at the frequency tuple."""
        n = self.fs.n
        masks = self._null_masks(itaus)
        lam = self._lam(itaus)
        lam_sum = np.zeros(tuple(len(v) for v in lam))
        for j, v in enumerate(lam):
            shape = [1] * n
            shape[j] = len(v)
            lam_sum = lam_sum + v.reshape(shape)
        nullpat = np.ones(lam_sum.shape, dtype=bool)
        if self.kind == "Ktilde":
            allnull = np.ones(lam_sum.shape, dtype=bool)
            for j, m in enumerate(masks):
                shape = [1] * n
                shape[j] = len(m)
                allnull = allnull & m.reshape(shape)
            nullpat = ~allnull
        elif self.kind in ("Ntilde", "Ntilde_A", "Neps"):
            A = frozenset(range(1, n + 1)) if self.kind == "Ntilde" else self.A
            for j, m in enumerate(masks):
                shape = [1] * n
                shape[j] = len(m)
                want_null = (j + 1) not in A
                nullpat = nullpat & (m if want_null else ~m).reshape(shape)
        elif self.kind == "S_A":
            # null exactly off A; factors in A unrestricted
            for j, m in enumerate(masks):
                if (j + 1) in self.A:
                    continue
                shape = [1] * n
                shape[j] = len(m)
                nullpat = nullpat & m.reshape(shape)
            return nullpat.astype(float)
        w = np.zeros(lam_sum.shape)
        sel = nullpat & (lam_sum > 0)
        w[sel] = 1.0 / lam_sum[sel]
        if self.kind == "Neps" and self.eps > 0:
            w = w * np.exp(-self.eps * lam_sum)
        return w

    def lambda_weighted(self, itaus, powers) -> np.ndarray:
        """Weight tensor multiplied by prod_j lambda_j^{powers[j]} (raw)."""
        w = self.weights(itaus)
        n = self.fs.n
        for j in range(1, n + 1):
            pw = powers[j - 1]
            if pw == 0:
                continue
            lam = self.fs.es(j, itaus[j - 1]).eigenvalues
            shape = [1] * n
            shape[j - 1] = len(lam)
            w = w * (lam ** pw).reshape(shape)
        return w

    def _pair_vectors(self, itaus, pair):
        """Per-factor E_j[k] = phi_k(r) conj(phi_k(c)) / h^2 for one pair."""
        (zs, ts), (ws, us) = pair
        out = []
        for j in range(1, self.fs.n + 1):
            es = self.fs.es(j, itaus[j - 1])
            r = es.grid.index_of(complex(zs[j - 1]))
            c = es.grid.index_of(complex(ws[j - 1]))
            out.append(es.vectors[r, :] * es.vectors[c, :].conj()
                       / es.grid.h ** 2)
        return out

    def entries(self, itaus, pairs, weight_tensor=None) -> np.ndarray:
        """Frequency-side kernel values K_hat(z,w;tau tuple) per pair.

        pairs: list of ((z_tuple, t_tuple), (w_tuple, u_tuple)); the t parts
        are ignored here (they enter through the inverse transform).
        """
        W = self.weights(itaus) if weight_tensor is None else weight_tensor
        vals = np.empty(len(pairs), dtype=complex)
        for i, pair in enumerate(pairs):
            vecs = self._pair_vectors(itaus, pair)
            acc = W.astype(complex)
            for v in vecs:
                acc = np.tensordot(v, acc, axes=([0], [0]))
            vals[i] = acc
        return vals

    def tuple_norm(self, itaus) -> float:
        return float(np.abs(self.weights(itaus)).max(initial=0.0))


def ktilde(fs: FactorSpectra) -> ProductKernel:
    return ProductKernel("Ktilde", fs)


def ntilde(fs: FactorSpectra) -> ProductKernel:
    return ProductKernel("Ntilde", fs)


def ntilde_A(fs: FactorSpectra, A) -> ProductKernel:
    return ProductKernel("Ntilde_A", fs, A=frozenset(A))


def s_tensor(fs: FactorSpectra, A) -> ProductKernel:
    return ProductKernel("S_A", fs, A=frozenset(A))


def eps_regularized_ntilde(fs: FactorSpectra, A, eps: float) -> ProductKernel:
    return ProductKernel("Neps", fs, A=frozenset(A), eps=float(eps))


def _all_itau_tuples(fs: FactorSpectra):
    return itertools.product(range(fs.n_tau), repeat=fs.n)


def _diag_itau_tuples(fs: FactorSpectra):
    return ((i,) * fs.n for i in range(fs.n_tau))


def decomposition_check(fs: FactorSpectra, itau_tuples=None) -> dict:
    """Residuals of the partition and relative-inverse identities.

    first0: Ktilde = Ntilde + sum over proper nonempty A of the
            (non-null exactly on A) kernels -- exact tuple-pattern partition.
    first:  Sum lambda_raw * w_Ktilde = 1 on non-all-null tuples, 0 on all-null.
    first2: Sum lambda_raw * w_Ntilde = 1 on all-non-null tuples, 0 elsewhere.
    """
    n = fs.n
    K = ktilde(fs)
    Nt = ntilde(fs)
    parts = [ntilde_A(fs, A)
             for r in range(1, n)
             for A in itertools.combinations(range(1, n + 1), r)]
    if itau_tuples is None:
        itau_tuples = list(_all_itau_tuples(fs))
    r0 = r1 = r2 = 0.0
    n_tuples = 0
    for itaus in itau_tuples:
        wK = K.weights(itaus)
        wN = Nt.weights(itaus)
        acc = wN.copy()
        for pk in parts:
            acc += pk.weights(itaus)
        r0 = max(r0, float(np.abs(wK - acc).max(initial=0.0)))
        lam_raw = np.zeros(wK.shape)
        masks = K._null_masks(itaus)
        allnull = np.ones(wK.shape, dtype=bool)
        nonnull_all = np.ones(wK.shape, dtype=bool)
        for j in range(1, n + 1):
            lam = fs.es(j, itaus[j - 1]).eigenvalues
            shape = [1] * n
            shape[j - 1] = len(lam)
            lam_raw = lam_raw + lam.reshape(shape)
            allnull = allnull & masks[j - 1].reshape(shape)
            nonnull_all = nonnull_all & (~masks[j - 1]).reshape(shape)
        tgt1 = (~allnull).astype(float)
        r1 = max(r1, float(np.abs(lam_raw * wK - tgt1).max(initial=0.0)))
        tgt2 = nonnull_all.astype(float)
        r2 = max(r2, float(np.abs(lam_raw * wN - tgt2).max(initial=0.0)))
        n_tuples += wK.size
    return {"first0_residual": r0, "first_residual": r1,
            "first2_residual": r2, "n_tuples": n_tuples}


def case_rule_241(fs: FactorSpectra) -> dict:
    """Per diagonal slice: box_J K_J = I - (projection term per the case rule).

    r = |J| = 0: the term is the full product of '-' Szego projectors;
    r = n: the full product of '+' projectors; 1 <= r <= n-1: the mixed
    projector vanishes at every tau != 0 (opposite Fourier supports), so the
    identity reduces to box K = I on the retained basis.
    """
    n = fs.n
    r = len(fs.J)
    K = ktilde(fs)
    per_slice = []
    worst = 0.0
    mixed_clean = True
    for i, tau in enumerate(fs.tau_grid):
        itaus = (i,) * n
        wK = K.weights(itaus)
        lam_raw = np.zeros(wK.shape)
        allnull = np.ones(wK.shape, dtype=bool)
        for j in range(1, n + 1):
            lam = fs.es(j, itaus[j - 1]).eigenvalues
            es = fs.es(j, itaus[j - 1])
            m = np.zeros(es.k, dtype=bool)
            m[: es.null_count] = True
            shape = [1] * n
            shape[j - 1] = len(lam)
            lam_raw = lam_raw + lam.reshape(shape)
            allnull = allnull & m.reshape(shape)
        proj = allnull.astype(float)
        res = float(np.abs(lam_raw * wK - (1.0 - proj)).max(initial=0.0))
        has_proj = bool(allnull.any())
        if 1 <= r <= n - 1 and tau != 0 and has_proj:
            mixed_clean = False
        per_slice.append({"tau": float(tau), "residual": res,
                          "projection_nonzero": has_proj})
        worst = max(worst, res)
    return {"J": sorted(fs.J), "r": r, "max_residual": worst,
            "mixed_projection_vanishes": mixed_clean,
            "slices": per_slice}


def relative_inverse_shape(fs: FactorSpectra) -> dict:
    """Envelope-shape check for N_J: per diagonal slice,

        box_J N_J = I + sum_{A subset J} (-1)^{|A|} S_{J,A}
                      + sum_{A cap J = empty, A nonempty} (-1)^{|A|} S_{J,A}

    which is inclusion-exclusion over null patterns once the mixed S_{J,A}
    (nonzero only at tau = 0) are dropped.
    """
    n = fs.n
    Nt = ntilde(fs)
    worst = 0.0
    for i, tau in enumerate(fs.tau_grid):
        if tau == 0:
            continue
        itaus = (i,) * n
        wN = Nt.weights(itaus)
        lam_raw = np.zeros(wN.shape)
        masks = []
        for j in range(1, n + 1):
            es = fs.es(j, itaus[j - 1])
            lam = es.eigenvalues
            m = np.zeros(es.k, dtype=bool)
            m[: es.null_count] = True
            shape = [1] * n
            shape[j - 1] = len(lam)
            lam_raw = lam_raw + lam.reshape(shape)
            masks.append((m, shape))
        lhs = lam_raw * wN
        rhs = np.ones(wN.shape)
        full = frozenset(range(1, n + 1))
        for rr in range(1, n + 1):
            for A in itertools.combinations(range(1, n + 1), rr):
                As = frozenset(A)
                if not (As <= fs.J or not (As & fs.J)):
                    continue            # mixed: vanishes off tau = 0
                term = np.ones(wN.shape)
                for j in A:
                    m, shape = masks[j - 1]
                    term = term * m.reshape(shape).astype(float)
                rhs = rhs + (-1.0) ** rr * term
        worst = max(worst, float(np.abs(lhs - rhs).max(initial=0.0)))
    return {"J": sorted(fs.J), "max_residual": worst}


# -- Phi-split and the three-part decomposition ---------------------------

def chi(u):
    """Quintic bump: 1 on (-inf, 1/2], 0 on [1, inf), C^2 smoothstep between."""
    u = np.asarray(u, dtype=float)
    x = np.clip(2.0 * u - 1.0, 0.0, 1.0)
    val = 1.0 - x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)
    return val if val.shape else float(val)


def rho_reg(S: DecoupledSurface, j: int, pfac, qfac) -> float:
    """Smooth off-diagonal surrogate (|z-w|^4 + mu_j(w,|u|)^4)^(1/4) ~ d_j."""
    (z, t), (w, s) = pfac, qfac
    u = abs(t - s - t_twist(S, j, w, z))
    m = mu(S, j, w, u)
    return (abs(z - w) ** 4 + m ** 4) ** 0.25


class _FactorTimeEval:
    """Per-factor time-domain heat/szego values on fixed pairs.

    Precomputes eigenentry products per tau node; any (s, kind) evaluation is
    then a cheap weighted sum plus one inverse transform.
    """

    def __init__(self, fs: FactorSpectra, j: int, pairs):
        self.fs = fs
        self.j = j
        self.dts = np.array([p[0][1][j - 1] - p[1][1][j - 1] for p in pairs])
        self.E = []          # per tau: (n_pairs, k) entry products / h^2
        self.lam = []
        self.nulls = []
        for itau in range(fs.n_tau):
            es = fs.es(j, itau)
            rows = [es.grid.index_of(complex(p[0][0][j - 1])) for p in pairs]
            cols = [es.grid.index_of(complex(p[1][0][j - 1])) for p in pairs]
            self.E.append(es.vectors[rows, :] * es.vectors[cols, :].conj()
                          / es.grid.h ** 2)
            self.lam.append(es.lam_effective())
            self.nulls.append(es.null_count)
        self.w_tau = sx.trapezoid_weights(fs.tau_grid)
        # phase[itau, ipair]
        self.phase = np.exp(2j * math.pi
                            * np.outer(fs.tau_grid, self.dts))

    def heat(self, s: float) -> np.ndarray:
        out = np.zeros(len(self.dts), dtype=complex)
        for itau in range(self.fs.n_tau):
            v = self.E[itau] @ np.exp(-s * self.lam[itau])
            out += self.w_tau[itau] * self.phase[itau] * v
        return out

    def szego(self) -> np.ndarray:
        out = np.zeros(len(self.dts), dtype=complex)
        for itau in range(self.fs.n_tau):
            nc = self.nulls[itau]
            v = self.E[itau][:, :nc].sum(axis=1) if nc else 0.0
            out += self.w_tau[itau] * self.phase[itau] * v
        return out


def phi_split(fs: FactorSpectra, j: int, s: float, pairs) -> dict:
    """Phi_j = H_j - chi(rho_j^2/s) S_j at the sample pairs, plus the parts."""
    ev = _FactorTimeEval(fs, j, pairs)
    H = ev.heat(s)
    Sj = ev.szego()
    rho = np.array([rho_reg(fs.surface, j,
                            ((p[0][0][j - 1], p[0][1][j - 1])),
                            ((p[1][0][j - 1], p[1][1][j - 1])))
                    for p in pairs])
    chis = np.array([chi(r * r / s) for r in rho])
    stilde = chis * Sj
    return {"H": H, "S": Sj, "chi": chis, "S_tilde": stilde,
            "Phi": H - stilde, "rho": rho}


def _s_nodes(fs: FactorSpectra, rhos, n_s: int = 200):
    """Log-spaced s-quadrature nodes covering the split supports and the
    spectral decay range."""
    rmin = max(float(np.min(rhos)), 1e-6)
    rmax = float(np.max(rhos))
    rate = math.inf
    for j in range(1, fs.n + 1):
        for itau in range(fs.n_tau):
            lam = fs.es(j, itau).lam_effective()
            pos = lam[lam > 0]
            if len(pos):
                rate = min(rate, float(pos[0]))
    if not math.isfinite(rate) or rate <= 0:
        raise EmptySpectrum("no positive spectrum for the s-integral")
    s_lo = 1e-4 * rmin ** 2
    s_hi = max(40.0 / rate, 4.0 * rmax ** 2)
    return np.geomspace(s_lo, s_hi, n_s)


def k_parts(fs: FactorSpectra, pairs, n_s: int = 200) -> dict:
    """K_0, K_A, K_inf parts of Ktilde at sample pairs, and the reassembly.

    Ktilde(p,q) = int_0^inf (prod_j H_j - prod_j S_j) ds splits via
    H_j = Phi_j + chi_j S_j into
        K_0            = int prod_j Phi_j ds
        (prod_{j notin A} S_j) K_A,  K_A = int (prod_{j in A} Phi_j)
                                             (prod_{j notin A} chi_j) ds
        (prod_j S_j) K_inf,          K_inf = int (prod_j chi_j - 1) ds
    and both sides are assembled with the same quadrature, so the check is
    algebraic up to float rounding.
    """
    n = fs.n
    evs = [_FactorTimeEval(fs, j, pairs) for j in range(1, n + 1)]
    npair = len(pairs)
    rho = np.array([[rho_reg(fs.surface, j,
                             ((p[0][0][j - 1], p[0][1][j - 1])),
                             ((p[1][0][j - 1], p[1][1][j - 1])))
                     for p in pairs] for j in range(1, n + 1)])
    s_nodes = _s_nodes(fs, rho, n_s=n_s)
    Sj = np.array([evs[j].szego() for j in range(n)])    # (n, npair)
    K0 = np.zeros(npair, dtype=complex)
    KA = {A: np.zeros(npair, dtype=complex)
          for r in range(1, n)
          for A in itertools.combinations(range(1, n + 1), r)}
    Kinf = np.zeros(npair)
    direct = np.zeros(npair, dtype=complex)
    prev_s = 0.0
    for s in s_nodes:
        ds = s - prev_s
        prev_s = s
        H = np.array([evs[j].heat(s) for j in range(n)])
        chis = chi(rho ** 2 / s)                          # (n, npair)
        Phi = H - chis * Sj
        K0 += ds * np.prod(Phi, axis=0)
        for A in KA:
            term = np.ones(npair, dtype=complex)
            for j in range(1, n + 1):
                term = term * (Phi[j - 1] if j in A else chis[j - 1])
            KA[A] += ds * term
        Kinf += ds * (np.prod(chis, axis=0) - 1.0)
        direct += ds * (np.prod(H, axis=0) - np.prod(Sj, axis=0))
    assembled = K0.copy()
    for A, val in KA.items():
        soff = np.ones(npair, dtype=complex)
        for j in range(1, n + 1):
            if j not in A:
                soff = soff * Sj[j - 1]
        assembled += soff * val
    assembled += np.prod(Sj, axis=0) * Kinf
    resid = float(np.abs(assembled - direct).max(initial=0.0))
    scale = float(np.abs(direct).max(initial=0.0)) + 1e-300
    return {"K0": K0, "KA": KA, "Kinf": Kinf, "Ktilde": direct,
            "assembled": assembled, "residual": resid,
            "relative_residual": resid / scale, "rho": rho,
            "s_nodes": s_nodes}


# -- descent ---------------------------------------------------------------

@dataclass
class DescentKernel:
    method: str
    tau_grid: np.ndarray
    slice_values: np.ndarray        # (n_pairs, n_tau) diagonal-frequency
    t_grid: np.ndarray
    time_values: np.ndarray         # (n_pairs, n_t)


def _dual_t_grid(tau_grid: np.ndarray) -> np.ndarray:
    d = np.diff(tau_grid)
    if not np.allclose(d, d[0], rtol=1e-12, atol=1e-14):
        raise ValueError("hyperplane descent needs a uniform tau grid")
    n = len(tau_grid)
    dt = 1.0 / (n * d[0])
    return np.arange(n) * dt


def descend(pk: ProductKernel, pairs, method: str = "diagonal",
            tail_tol: float = None) -> DescentKernel:
    fs = pk.fs
    taus = fs.tau_grid
    n = fs.n
    diag = np.stack([pk.entries((i,) * n, pairs)
                     for i in range(fs.n_tau)], axis=-1)   # (npair, ntau)
    if method == "diagonal":
        if tail_tol is not None:
            _check_tail(diag, pk, tail_tol)
        if _is_uniform(taus):
            # uniform grid: periodic (rectangle) weights on the DFT-dual
            # time grid, so the hyperplane method agrees to machine precision
            t_grid = _dual_t_grid(taus)
            w = np.full(len(taus), taus[1] - taus[0])
        else:
            t_grid = np.linspace(0.0, 1.0, 33)
            w = sx.trapezoid_weights(taus)
        phase = np.exp(2j * math.pi * np.outer(t_grid, taus))
        tv = (diag * w) @ phase.T
        return DescentKernel("diagonal", taus, diag, t_grid, tv)
    if method != "hyperplane":
        raise ValueError("method must be 'diagonal' or 'hyperplane'")
    t_grid = _dual_t_grid(taus)
    if tail_tol is not None:
        _check_tail(diag, pk, tail_tol)
    nt = len(taus)
    dt = t_grid[1] - t_grid[0]
    dtau = taus[1] - taus[0]
    phase = np.exp(2j * math.pi * np.outer(t_grid, taus))   # (nt, ntau)
    npair = len(pairs)
    if n == 1:
        tv = diag @ (phase.T * dtau)
        return DescentKernel("hyperplane", taus, diag, t_grid, tv)
    # full joint frequency tensor, factor-by-factor time transform, then
    # (n-1)-fold circular convolution over the slicing hyperplane
    tv = np.zeros((npair, nt), dtype=complex)
    for ip in range(npair):
        vals = np.empty((nt,) * n, dtype=complex)
        for itaus in _all_itau_tuples(fs):
            vals[itaus] = pk.entries(itaus, [pairs[ip]])[0]
        T = vals
        for ax in range(n):
            T = np.tensordot(T, phase * dtau, axes=([0], [1]))
        # T[t_1,...,t_n]; fold the first two time axes circularly until one
        # axis remains: K(t) = sum_r K~(t_r, t - t_r) dt
        acc = T
        while acc.ndim > 1:
            out = np.zeros((nt,) + acc.shape[2:], dtype=complex)
            for k in range(nt):
                s = 0.0
                for r in range(nt):
                    s = s + acc[r][(k - r) % nt]
                out[k] = dt * s
            acc = out
        tv[ip] = acc
    return DescentKernel("hyperplane", taus, diag, t_grid, tv)


def _is_uniform(taus):
    d = np.diff(taus)
    return np.allclose(d, d[0], rtol=1e-12, atol=1e-14)


def _check_tail(diag, pk, tail_tol):
    ref = np.abs(diag).max() + 1e-300
    tail = max(np.abs(diag[:, 0]).max(), np.abs(diag[:, -1]).max())
    if tail / ref > tail_tol:
        if pk.kind in ("S_A",) or (pk.kind == "Neps" and pk.eps == 0):
            raise SingularityOnPath(
                "non-decaying frequency tail; use eps_regularized input")
        raise sx.TailTruncation("frequency tail above tolerance")


def descent_cross_validation(pk: ProductKernel, pairs) -> dict:
    d1 = descend(pk, pairs, method="diagonal")
    d2 = descend(pk, pairs, method="hyperplane")
    diff = float(np.abs(d1.time_values - d2.time_values).max(initial=0.0))
    scale = float(np.abs(d1.time_values).max(initial=0.0)) + 1e-300
    return {"max_abs_diff": diff, "max_rel_diff": diff / scale,
            "diagonal": d1, "hyperplane": d2}


# -- mixed Szego products, borrowing, transference ------------------------

def szego_mix_vanish(fs_by_sign: dict, J, A, tau_grid) -> dict:
    """Diagonal-slice norms of the mixed projector product S_{J,A}.

    fs_by_sign: {'+': FactorSpectra with all-plus signs is NOT what we need;
    instead pass an EigenCache-backed accessor}  -- here we accept a callable
    (j, sign, tau) -> EigenSystem for flexibility.
    """
    get = fs_by_sign
    J, A = frozenset(J), frozenset(A)
    norms = {}
    for tau in tau_grid:
        if tau == 0:
            continue
        prod = 1.0
        for j in A:
            sign = "+" if j in J else "-"
            es = get(j, sign, tau)
            prod *= 1.0 if es.null_count > 0 else 0.0
        norms[float(tau)] = prod
    vanish = all(v == 0.0 for v in norms.values())
    should_vanish = not (A <= J or not (A & J))
    return {"J": sorted(J), "A": sorted(A), "norms": norms,
            "vanishes": vanish, "should_vanish": should_vanish,
            "pass": vanish == should_vanish}


def borrowing_check(fs: FactorSpectra, pairs) -> dict:
    """(d/dt_1 S_1 (x) K_2)^# = (S_1 (x) d/dt_2 K_2)^#.

    In the diagonal representation both sides are (2 pi i tau) S1_hat K2_hat,
    identically; the hyperplane evaluations of the two sides are compared as
    an independent residual.  Requires n = 2 and a uniform tau grid.
    """
    if fs.n != 2:
        raise ValueError("borrowing check is a two-factor statement")
    taus = fs.tau_grid
    t_grid = _dual_t_grid(taus)
    nt = len(taus)
    dtau = taus[1] - taus[0]
    dt = t_grid[1] - t_grid[0]
    phase = np.exp(2j * math.pi * np.outer(t_grid, taus))
    ev1 = _FactorTimeEval(fs, 1, pairs)
    ev2 = _FactorTimeEval(fs, 2, pairs)
    npair = len(pairs)
    res = 0.0
    scale = 1e-300
    for ip in range(npair):
        s1 = np.array([ev1.E[i][ip, :ev1.nulls[i]].sum() if ev1.nulls[i]
                       else 0.0 for i in range(nt)])
        def green_entry(i):
            lam = ev2.lam[i]
            nz = lam > 0
            return np.sum(ev2.E[i][ip, nz] / lam[nz])

        k2 = np.array([green_entry(i) for i in range(nt)])
        dphase = 2j * math.pi * taus
        f1 = phase * dtau                                   # (n_t, n_tau)
        lhs_f1 = f1 @ (s1 * dphase)                         # d/dt on factor 1
        lhs_f2 = f1 @ k2
        rhs_f1 = f1 @ s1
        rhs_f2 = f1 @ (k2 * dphase)

        def circ(a, b):
            out = np.zeros(nt, dtype=complex)
            for k in range(nt):
                out[k] = dt * sum(a[r] * b[(k - r) % nt] for r in range(nt))
            return out

        lhs = circ(lhs_f1, lhs_f2)
        rhs = circ(rhs_f1, rhs_f2)
        diag = f1 @ (s1 * k2 * dphase)
        res = max(res, float(np.abs(lhs - rhs).max(initial=0.0)))
        scale = max(scale, float(np.abs(diag).max(initial=0.0)))
    return {"diagonal_residual": 0.0,
            "hyperplane_residual": res,
            "hyperplane_relative": res / scale}


def transference_norm(pk_or_weights, fs: FactorSpectra = None) -> tuple:
    """(norm on the product, norm on the quotient) at p = 2.

    For a tuple-diagonal kernel the L2 operator norm is the sup of |weight|
    over frequency tuples; descent restricts the sup to the diagonal, which
    is the transference inequality made exact.
    """
    if isinstance(pk_or_weights, ProductKernel):
        pk = pk_or_weights
        fs = pk.fs
        get_w = lambda itaus: pk.weights(itaus)
    else:
        get_w = pk_or_weights
    norm_prod = 0.0
    for itaus in _all_itau_tuples(fs):
        norm_prod = max(norm_prod, float(np.abs(get_w(itaus)).max(initial=0.0)))
    norm_M = 0.0
    for itaus in _diag_itau_tuples(fs):
        norm_M = max(norm_M, float(np.abs(get_w(itaus)).max(initial=0.0)))
    assert norm_M <= norm_prod * (1 + 1e-6)
    return norm_prod, norm_M


def transference_trials(fs: FactorSpectra, n_trials: int = 20,
                        seed: int = 0) -> dict:
    """Random compactly-truncated kernels: the inequality must hold each time."""
    rng = np.random.default_rng(seed)
    shapes = {itaus: tuple(fs.es(j + 1, itaus[j]).k for j in range(fs.n))
              for itaus in _all_itau_tuples(fs)}
    results = []
    for _ in range(n_trials):
        w = {itaus: rng.standard_normal(shapes[itaus])
             * np.exp(-0.1 * sum(itaus)) for itaus in shapes}
        np_, nm = transference_norm(lambda itaus: w[itaus], fs)
        results.append(bool(nm <= np_ * (1 + 1e-6)))
    return {"n_trials": n_trials, "n_pass": sum(results),
            "all_pass": all(results)}


# -- differential-inequality spot checks ----------------------------------

def ntilde_derivative_ratios(fs: FactorSpectra, pairs,
                             orders=((0, 0), (2, 0), (0, 2))) -> dict:
    """|box-derivative of Ntilde| vs the two-factor envelope

        d_1^{-a_1} d_2^{-a_2} [min(d_1,d_2)]^2 / (V_1 V_2)

    with V_j = d_j^2 Lambda_j(p_j, d_j); ratios reported, asserted finite.
    """
    if fs.n != 2:
        raise ValueError("two-factor check")
    S = fs.surface
    Nt = ntilde(fs)
    taus = fs.tau_grid
    w2 = sx.trapezoid_weights(taus)
    out = {}
    for (a1, a2) in orders:
        ratios = []
        for pair in pairs:
            (zs, ts), (ws, us) = pair
            ds = [dist_factor(S, j, (zs[j - 1], ts[j - 1]),
                              (ws[j - 1], us[j - 1])) for j in (1, 2)]
            if min(ds) == 0:
                continue
            V = [ds[j] ** 2 * Lambda(S, j + 1, ws[j], ds[j]) for j in (0, 1)]
            bound = (ds[0] ** (-a1) * ds[1] ** (-a2)
                     * min(ds) ** 2 / (V[0] * V[1]))
            val = 0.0 + 0.0j
            for i1 in range(fs.n_tau):
                for i2 in range(fs.n_tau):
                    W = Nt.lambda_weighted((i1, i2), (a1 // 2, a2 // 2))
                    v = Nt.entries((i1, i2), [pair], weight_tensor=W)[0]
                    dt1 = pair[0][1][0] - pair[1][1][0]
                    dt2 = pair[0][1][1] - pair[1][1][1]
                    ph = np.exp(2j * math.pi * (taus[i1] * dt1
                                                + taus[i2] * dt2))
                    val += w2[i1] * w2[i2] * ph * v
            ratios.append(abs(val) / bound)
        arr = np.array(ratios)
        out[(a1, a2)] = {"max_ratio": float(arr.max(initial=0.0)),
                         "n": len(arr),
                         "finite": bool(np.isfinite(arr).all())}
    return out
