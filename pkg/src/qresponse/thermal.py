"""Grand-canonical states, BKM correlators and static susceptibilities.

Notation used throughout: ``K = H - mu N`` with eigenvalues ``omega_j``,
log weights ``l_j = -beta omega_j - log Z`` and weights ``p_j = exp(l_j)``.
Derivatives with respect to temperature and chemical potential are first
taken in the natural coordinates ``(beta, alpha = beta mu)``, where
``rho ~ exp(-beta H + alpha N)`` and every derivative of a diagonal
expectation value is a classical joint cumulant, and then converted to
``(T, mu)`` by the chain rule.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingCouplingTable, NonCommutingNumber, SingularJacobian, ValidationError
from .linalg import BKM, EigenSystem, LOGMEAN_SERIES_CUTOFF, eig_hermitian, kf_kernel
from .model import COMMUTE_ATOL, SystemSpec, hamiltonian_at, observable_at

DEGENERACY_ATOL = 1e-10
PINV_RCOND = 1e-10


@dataclass
class ThermalState:
    """Gibbs state of ``H(j) - mu N`` at inverse temperature ``beta``.

    The eigenvectors jointly diagonalize ``N`` inside degenerate levels, so
    ``n_diag`` holds sharp particle numbers of the eigenvectors.
    """

    beta: float
    mu: float
    eig: EigenSystem
    weights: np.ndarray
    log_weights: np.ndarray
    logZ: float
    n_diag: np.ndarray
    spec: SystemSpec | None = None
    j: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def energies(self) -> np.ndarray:
        """Eigenvalues ``omega_j`` of ``H - mu N``."""
        return self.eig.eigenvalues

    @property
    def h_diag(self) -> np.ndarray:
        """Eigenvalues of ``H`` on the joint eigenvectors."""
        return self.eig.eigenvalues + self.mu * self.n_diag

    def rho(self) -> np.ndarray:
        return self.eig.from_eigenbasis(np.diag(self.weights.astype(complex)))

    def eb(self, A) -> np.ndarray:
        """Matrix elements of ``A`` in the energy eigenbasis."""
        return self.eig.to_eigenbasis(np.asarray(A, dtype=complex))

    def expect(self, A) -> float:
        return float(np.real(np.sum(self.weights * np.diag(self.eb(A)))))

    def bkm_kernel(self) -> np.ndarray:
        """Log-mean weights ``c_jk = (p_j - p_k)/(l_j - l_k)``."""
        if "c2" not in self._cache:
            w = self.energies
            lw = self.log_weights
            diff = -self.beta * (w[:, None] - w[None, :])
            self._cache["c2"] = kf_kernel(BKM, lw[:, None], lw[None, :], diff=diff)
        return self._cache["c2"]

    def divdiff3(self) -> np.ndarray:
        """Second divided differences ``exp[l_a, l_b, l_c]`` on all triples."""
        if "c3" not in self._cache:
            lw = self.log_weights
            self._cache["c3"] = exp_divdiff2(lw[:, None, None], lw[None, :, None], lw[None, None, :])
        return self._cache["c3"]


def _joint_eigensystem(K: np.ndarray, N: np.ndarray | None) -> tuple[EigenSystem, np.ndarray]:
    es = eig_hermitian(K)
    w, U = es.eigenvalues, es.vectors.copy()
    if N is None:
        return es, np.zeros_like(w)
    scale = max(1.0, np.max(np.abs(w)))
    start = 0
    d = len(w)
    while start < d:
        stop = start + 1
        while stop < d and w[stop] - w[stop - 1] <= DEGENERACY_ATOL * scale:
            stop += 1
        if stop - start > 1:
            block = U[:, start:stop]
            sub = block.conj().T @ N @ block
            _, V = np.linalg.eigh(0.5 * (sub + sub.conj().T))
            U[:, start:stop] = block @ V
        start = stop
    n = np.real(np.einsum("ij,ik,kj->j", U.conj(), N, U))
    return EigenSystem(w, U), n


def gibbs(spec: SystemSpec, beta: float, mu: float = 0.0, j=None) -> ThermalState:
    """Grand-canonical state of ``spec`` at sources ``j`` (default ``j_init``).

    Raises
    ------
    NonCommutingNumber
        If ``H(j)`` does not commute with the number operator.
    """
    if not beta > 0:
        raise ValidationError("beta must be positive")
    jv = spec.j_init.copy() if j is None else np.asarray(j, dtype=float)
    H = hamiltonian_at(spec, jv)
    N = spec.N_op if spec.has_number else None
    if N is not None:
        c = np.max(np.abs(H @ N - N @ H))
        if c > COMMUTE_ATOL * max(1.0, np.max(np.abs(H))):
            raise NonCommutingNumber(f"[H(j), N] has norm {c:.3e}")
        K = H - mu * N
    else:
        K = H
    es, n = _joint_eigensystem(K, N)
    w = es.eigenvalues
    # shift by the ground energy so exp never overflows
    x = -beta * (w - w[0])
    logZ = float(-beta * w[0] + np.log(np.sum(np.exp(x))))
    lw = -beta * w - logZ
    p = np.exp(lw)
    return ThermalState(float(beta), float(mu), es, p, lw, logZ, n, spec, jv)


@dataclass(frozen=True)
class ThermoPoint:
    E: float
    N_val: float
    S: float
    Omega: float
    Phi: np.ndarray


def thermo_point(state: ThermalState, spec: SystemSpec | None = None) -> ThermoPoint:
    """Energy, number, entropy, grand potential and source expectations."""
    spec = spec or state.spec
    p = state.weights
    N_val = float(np.sum(p * state.n_diag))
    E = float(np.sum(p * state.energies)) + state.mu * N_val
    S = state.logZ + state.beta * E - state.beta * state.mu * N_val
    Omega = -state.logZ / state.beta
    Phi = np.array([state.expect(observable_at(spec, m, state.j)) for m in range(spec.n_sources)])
    return ThermoPoint(E, N_val, S, Omega, Phi)


# --------------------------------------------------------------------------
# divided differences and BKM forms


def exp_divdiff2(x, y, z) -> np.ndarray:
    """Second divided difference of ``exp`` at three real points.

    Equals the integral of ``exp(l1 x + l2 y + l3 z)`` over the simplex
    ``l1 + l2 + l3 = 1``.  Points closer together than the series cutoff use a
    Taylor expansion around their mean.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    pts = np.sort(np.stack([x, y, z]), axis=0)
    c, b, a = pts[0], pts[1], pts[2]
    spread = a - c
    out = np.empty_like(a)
    small = spread < LOGMEAN_SERIES_CUTOFF
    if np.any(small):
        m = (a[small] + b[small] + c[small]) / 3.0
        d = [a[small] - m, b[small] - m, c[small] - m]
        p2 = d[0] ** 2 + d[1] ** 2 + d[2] ** 2
        h2 = 0.5 * p2
        h3 = (d[0] ** 3 + d[1] ** 3 + d[2] ** 3) / 3.0
        h4 = 0.125 * p2**2 + 0.25 * (d[0] ** 4 + d[1] ** 4 + d[2] ** 4)
        out[small] = np.exp(m) * (0.5 + h2 / 24.0 + h3 / 120.0 + h4 / 720.0)
    big = ~small
    if np.any(big):
        ab = np.exp(a[big]) * BKM.of_exp(a[big] - b[big])
        bc = np.exp(b[big]) * BKM.of_exp(b[big] - c[big])
        out[big] = (ab - bc) / spread[big]
    return out


def bkm_inner(state: ThermalState, A, B) -> float:
    """BKM inner product ``int_0^1 Tr{A rho^(1-l) B rho^l} dl``."""
    a, b = state.eb(A), state.eb(B)
    return float(np.real(np.sum(a * b.T * state.bkm_kernel())))


def bkm_connected(state: ThermalState, A, B) -> float:
    return bkm_inner(state, A, B) - state.expect(A) * state.expect(B)


def bkm_three(state: ThermalState, A, B, C) -> float:
    """Symmetric BKM three-point function.

    Simplex integral of ``Tr{A rho^l1 B rho^l2 C rho^l3} + (B <-> C)``,
    evaluated in the eigenbasis as
    ``sum_abc A_ab B_bc C_ca exp[l_a, l_b, l_c] + (B <-> C)``.
    """
    a, b, c = state.eb(A), state.eb(B), state.eb(C)
    D = state.divdiff3()
    s = np.einsum("ab,bc,ca,abc->", a, b, c, D) + np.einsum("ab,bc,ca,abc->", a, c, b, D)
    return float(np.real(s))


def bkm_three_connected(state: ThermalState, A, B, C) -> float:
    """Third cumulant built from the BKM forms."""
    ea, eb_, ec = state.expect(A), state.expect(B), state.expect(C)
    return (
        bkm_three(state, A, B, C)
        - bkm_inner(state, A, B) * ec
        - bkm_inner(state, A, C) * eb_
        - bkm_inner(state, B, C) * ea
        + 2.0 * ea * eb_ * ec
    )


# --------------------------------------------------------------------------
# isothermal susceptibilities


def _check_tables(spec: SystemSpec, order: int, strict: bool):
    if order not in (2, 3):
        raise ValidationError("order must be 2 or 3")
    if strict and not spec.has_second_order:
        raise MissingCouplingTable("second-order coupling table absent")
    if strict and order == 3 and not spec.has_third_order:
        raise MissingCouplingTable("third-order coupling table absent")


def chi_T_mu_state(state: ThermalState, order: int = 2) -> np.ndarray:
    """Isothermal susceptibility tensor for an existing state at ``j_init``."""
    spec = state.spec
    beta = state.beta
    M = spec.n_sources
    P = np.array([state.eb(p) for p in spec.phi]) if M else np.zeros((0, state.dim, state.dim))
    Phi = np.real(np.einsum("mjj,j->m", P, state.weights))
    c2 = state.bkm_kernel()
    Bmat = np.real(np.einsum("mjk,nkj,jk->mn", P, P, c2))
    phi2_exp = np.array([[state.expect(spec.phi2(m, n)) for n in range(M)] for m in range(M)])
    chi2 = beta * (Bmat - np.outer(Phi, Phi)) + phi2_exp
    chi2 = 0.5 * (chi2 + chi2.T)
    if order == 2:
        return chi2
    chi3 = np.zeros((M, M, M))
    for m, n, k in itertools.combinations_with_replacement(range(M), 3):
        A, B, C = spec.phi[m], spec.phi[n], spec.phi[k]
        val = beta**2 * bkm_three_connected(state, A, B, C)
        val += beta * (
            bkm_connected(state, spec.phi2(m, n), C)
            + bkm_connected(state, spec.phi2(m, k), B)
            + bkm_connected(state, spec.phi2(n, k), A)
        )
        val += state.expect(spec.phi3(m, n, k))
        for perm in set(itertools.permutations((m, n, k))):
            chi3[perm] = val
    return chi3


def chi_T_mu(spec: SystemSpec, beta: float, mu: float = 0.0, order: int = 2, strict_tables: bool = False) -> np.ndarray:
    """Susceptibility tensor at fixed temperature and chemical potential.

    Order 2: ``chi_mn = beta <phi_m;phi_n>_c + <phi_mn>``.
    Order 3: ``beta^2 <phi_m;phi_n;phi_k>_c + beta (<phi_mn;phi_k>_c + 2 perm.)
    + <phi_mnk>``.
    """
    _check_tables(spec, order, strict_tables)
    return chi_T_mu_state(gibbs(spec, beta, mu), order)


# --------------------------------------------------------------------------
# temperature and chemical-potential derivatives


def _cumulants(p: np.ndarray, v: np.ndarray, x: np.ndarray | None = None):
    """Joint cumulants of the variables ``v[a]`` (and optionally ``x[m]``).

    Returns second and third cumulant tensors of ``v`` and, if ``x`` is given,
    the mixed ``cov(v_a, x_m)`` and ``k3(v_a, v_b, x_m)``.
    """
    dv = v - (v @ p)[:, None]
    k2 = np.einsum("aj,bj,j->ab", dv, dv, p)
    k3 = np.einsum("aj,bj,cj,j->abc", dv, dv, dv, p)
    if x is None:
        return k2, k3
    dx = x - (x @ p)[:, None]
    c2 = np.einsum("aj,mj,j->am", dv, dx, p)
    c3 = np.einsum("aj,bj,mj,j->abm", dv, dv, dx, p)
    return k2, k3, c2, c3


def _chain(beta: float, mu: float, grad: np.ndarray, hess: np.ndarray | None = None):
    """Convert derivatives in (beta, alpha=beta mu) into (T, mu).

    ``grad`` has the coordinate axis first; ``hess`` the first two axes.
    """
    b = beta
    G = np.array([[-b * b, 0.0], [-mu * b * b, b]])  # G[theta, x] = d theta / d x
    g_x = np.tensordot(G, grad, axes=([0], [0]))
    if hess is None:
        return g_x
    h_x = np.einsum("ta,sb,ts...->ab...", G, G, hess)
    dd_beta = np.array([[2 * b**3, 0.0], [0.0, 0.0]])
    dd_alpha = np.array([[2 * mu * b**3, -b * b], [-b * b, 0.0]])
    h_x = h_x + np.einsum("ab,...->ab...", dd_beta, grad[0]) + np.einsum("ab,...->ab...", dd_alpha, grad[1])
    return g_x, h_x


@dataclass(frozen=True)
class ThermoJacobian:
    """Temperature and chemical potential derivatives at one state.

    Coordinates ``x = (T, mu)``.  ``jac`` uses the layout
    ``[[dS/dT, dN/dT], [dS/dmu, dN/dmu]]``; ``d2Y[i, a, b]`` holds
    ``d^2 Y_i / dx_a dx_b`` for ``Y = (S, N)`` and ``d3Omega = -d2Y``.
    ``n_vars`` is 2 with a conserved number and 1 without one.
    """

    dPhi_dT: np.ndarray
    dPhi_dmu: np.ndarray
    d2Phi: np.ndarray  # (M, 2, 2)
    dchi_dx: np.ndarray  # (M, M, 2)
    jac: np.ndarray
    d2Y: np.ndarray
    d3Omega: np.ndarray
    n_vars: int

    @property
    def grad_Phi(self) -> np.ndarray:
        """Rows ``(dPhi_m/dT, dPhi_m/dmu)``."""
        return np.stack([self.dPhi_dT, self.dPhi_dmu], axis=1)


def thermo_jacobian(spec: SystemSpec, beta: float, mu: float = 0.0, j=None, state: ThermalState | None = None) -> ThermoJacobian:
    """First and second (T, mu) derivatives of Phi, chi and (S, N)."""
    st = state if state is not None else gibbs(spec, beta, mu, j)
    beta, mu = st.beta, st.mu
    M = spec.n_sources
    p = st.weights
    v = np.stack([-st.h_diag, st.n_diag])  # d l_j / d(beta, alpha) up to centering
    P = np.array([st.eb(observable_at(spec, m, st.j)) for m in range(M)]).reshape(M, st.dim, st.dim)
    x = np.real(np.einsum("mjj->mj", P))
    k2, k3, c2, c3 = _cumulants(p, v, x)

    # expectation values of phi_m
    gPhi, hPhi = _chain(beta, mu, c2, c3)  # (2, M), (2, 2, M)

    # log Z derivatives in theta are cumulants of v: L_a = <v_a>, L_ab = k2, L_abc = k3
    theta = np.array([beta, beta * mu])
    S_th = -np.einsum("c,ca->a", theta, k2)
    S_thth = -k2 - np.einsum("c,cab->ab", theta, k3)
    N_th = k2[1]
    N_thth = k3[1]
    gS, hS = _chain(beta, mu, S_th, S_thth)
    gN, hN = _chain(beta, mu, N_th, N_thth)
    jac = np.array([[gS[0], gN[0]], [gS[1], gN[1]]])
    d2Y = np.stack([hS, hN])

    # susceptibility derivatives
    c2k = st.bkm_kernel()
    dl = v - (v @ p)[:, None]  # d l_j / d theta_a
    D = st.divdiff3()
    dd_jjk = np.einsum("jjk->jk", D)  # exp[l_j, l_j, l_k]
    dd_jkk = np.einsum("jkk->jk", D)  # exp[l_j, l_k, l_k]
    dc = dd_jjk[None] * dl[:, :, None] + dd_jkk[None] * dl[:, None, :]  # (2, d, d)
    Bmat = np.real(np.einsum("mjk,nkj,jk->mn", P, P, c2k))
    dB = np.real(np.einsum("mjk,nkj,ajk->amn", P, P, dc))
    Phi = x @ p
    dPhi_th = c2  # (2, M)
    dPhiPhi = np.einsum("am,n->amn", dPhi_th, Phi) + np.einsum("m,an->amn", Phi, dPhi_th)
    phi2 = np.array(
        [[np.real(np.diag(st.eb(spec.phi2(m, n)))) for n in range(M)] for m in range(M)]
    ).reshape(M, M, st.dim)
    dphi2 = np.einsum("aj,mnj,j->amn", dl, phi2, p)
    dchi_th = beta * (dB - dPhiPhi) + dphi2
    dchi_th[0] += Bmat - np.outer(Phi, Phi)
    dchi_x = _chain(beta, mu, dchi_th)  # (2, M, M)

    n_vars = 2 if spec.has_number else 1
    return ThermoJacobian(
        dPhi_dT=gPhi[0],
        dPhi_dmu=gPhi[1] if spec.has_number else np.zeros(M),
        d2Phi=np.moveaxis(hPhi, 2, 0),
        dchi_dx=np.moveaxis(dchi_x, 0, 2),
        jac=jac,
        d2Y=d2Y,
        d3Omega=-d2Y,
        n_vars=n_vars,
    )


# --------------------------------------------------------------------------
# fixed entropy and number


def _solve_sym(J: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Least-squares solve ``J X = rhs`` that tolerates rank deficiency.

    A rank-deficient ``J`` is accepted only when every right-hand side lies
    in its range (true for the covariance structure of a degenerate
    ensemble); otherwise the ensemble cannot be inverted.
    """
    X, *_ = np.linalg.lstsq(J, rhs, rcond=PINV_RCOND)
    resid = np.max(np.abs(J @ X - rhs)) if rhs.size else 0.0
    scale = max(np.max(np.abs(rhs)) if rhs.size else 0.0, 1e-300)
    if not np.all(np.isfinite(X)) or resid > 1e-8 * scale + 1e-14:
        raise SingularJacobian("(S, N) <-> (T, mu) Jacobian is not invertible")
    return X


def _fixed_SN_parts(spec: SystemSpec, beta: float, mu: float):
    st = gibbs(spec, beta, mu)
    jb = thermo_jacobian(spec, beta, mu, state=st)
    nv = jb.n_vars
    Jyx = jb.jac.T[:nv, :nv]  # Jyx[i, a] = dY_i / dx_a
    g = jb.grad_Phi[:, :nv]  # (M, nv)
    X = -_solve_sym(Jyx, g.T).T  # dx/dj_n at fixed (S, N), rows n
    return st, jb, nv, Jyx, g, X


def chi_S_N(spec: SystemSpec, beta: float, mu: float = 0.0, order: int = 2, strict_tables: bool = False) -> np.ndarray:
    """Susceptibility tensor at fixed entropy and particle number.

    Order 2 subtracts ``g_m^T J^{-1} g_n`` from the isothermal tensor, where
    ``g_m = (dPhi_m/dT, dPhi_m/dmu)`` and ``J = d(S, N)/d(T, mu)``.  Order 3
    is the second total derivative of ``Phi_m`` along the implicit curve of
    constant ``(S, N)``.  Without a conserved number only ``T`` is adjusted.
    """
    _check_tables(spec, order, strict_tables)
    st, jb, nv, Jyx, g, X = _fixed_SN_parts(spec, beta, mu)
    chi2 = chi_T_mu_state(st, 2)
    chi2_sn = chi2 + g @ X.T
    chi2_sn = 0.5 * (chi2_sn + chi2_sn.T)
    if order == 2:
        return chi2_sn
    M = spec.n_sources
    chi3 = chi_T_mu_state(st, 3)
    dchi = jb.dchi_dx[:, :, :nv]  # (M, M, nv)
    d2Phi = jb.d2Phi[:, :nv, :nv]
    d2Y = jb.d2Y[:nv, :nv, :nv]
    # y_{,nk} + (d_x g_n) x_k + (d_x g_k) x_n + d2Y[x_n, x_k] + J x_nk = 0
    rhs = (
        np.moveaxis(dchi, 2, 0)
        + np.einsum("nab,kb->ank", d2Phi, X)
        + np.einsum("kab,nb->ank", d2Phi, X)
        + np.einsum("iab,na,kb->ink", d2Y, X, X)
    )
    Xnk = -_solve_sym(Jyx, rhs.reshape(nv, -1)).reshape(nv, M, M)
    out = (
        chi3
        + np.einsum("mna,ka->mnk", dchi, X)
        + np.einsum("mka,na->mnk", dchi, X)
        + np.einsum("na,mab,kb->mnk", X, d2Phi, X)
        + np.einsum("ma,ank->mnk", g, Xnk)
    )
    # symmetrize against rounding
    sym = sum(np.transpose(out, perm) for perm in itertools.permutations(range(3))) / 6.0
    return sym


def suzuki_limit(spec: SystemSpec, beta: float, mu: float = 0.0, method: str = "closed") -> np.ndarray:
    """Difference between isothermal and fixed-(S, N) susceptibilities.

    ``method="closed"`` evaluates ``g_m^T J^{-1} g_n``.  ``method="cesaro"``
    evaluates the long-time average of ``beta <phi_m(t); phi_n>_c``, i.e. the
    projection onto all conserved quantities of the finite system; the two
    agree when the energy-diagonal part of each ``phi_m`` lies in the span of
    ``1``, ``H`` and ``N``.
    """
    if method == "closed":
        _, _, _, _, g, X = _fixed_SN_parts(spec, beta, mu)
        L = -(g @ X.T)
        return 0.5 * (L + L.T)
    if method == "cesaro":
        st = gibbs(spec, beta, mu)
        return cesaro_limit(st, spec.phi, spec.phi)
    raise ValidationError(f"unknown method {method!r}")


def cesaro_limit(state: ThermalState, As, Bs) -> np.ndarray:
    """``beta * (sum_{omega_j = omega_k} p_j A_jk B_kj - <A><B>)`` for all pairs."""
    w = state.energies
    scale = max(1.0, np.max(np.abs(w)))
    same = np.abs(w[:, None] - w[None, :]) <= DEGENERACY_ATOL * scale
    a = np.array([state.eb(A) for A in As])
    b = np.array([state.eb(B) for B in Bs])
    ea = np.real(np.einsum("mjj,j->m", a, state.weights))
    ebv = np.real(np.einsum("mjj,j->m", b, state.weights))
    s = np.real(np.einsum("mjk,nkj,jk,j->mn", a, b, same, state.weights))
    return state.beta * (s - np.outer(ea, ebv))


def solve_fixed_SN(
    spec: SystemSpec,
    S_target: float,
    N_target: float | None,
    j,
    beta0: float,
    mu0: float = 0.0,
    tol: float = 1e-13,
    max_iter: int = 100,
) -> ThermalState:
    """Find the Gibbs state at sources ``j`` with given entropy and number.

    Damped Newton iteration on the ``(S, N)`` residuals in ``(T, mu)``, using
    the analytic Jacobian.  Without a conserved number only ``T`` varies.
    """
    from .errors import ConvergenceFailure

    T, mu = 1.0 / beta0, mu0
    nv = 2 if spec.has_number else 1
    target = np.array([S_target, 0.0 if N_target is None else N_target])[:nv]

    def resid(T_, mu_):
        st = gibbs(spec, 1.0 / T_, mu_, j)
        tp = thermo_point(st, spec)
        return st, np.array([tp.S, tp.N_val])[:nv] - target

    st, r = resid(T, mu)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol * max(1.0, np.max(np.abs(target))):
            return st
        jb = thermo_jacobian(spec, 1.0 / T, mu, state=st)
        J = jb.jac.T[:nv, :nv]
        step = np.linalg.solve(J, -r)
        lam = 1.0
        while True:
            Tn = T + lam * step[0]
            mun = mu + (lam * step[1] if nv == 2 else 0.0)
            if Tn > 0:
                stn, rn = resid(Tn, mun)
                if np.max(np.abs(rn)) < np.max(np.abs(r)) or lam < 1e-6:
                    break
            lam *= 0.5
            if lam < 1e-8:
                raise ConvergenceFailure("damped Newton stalled")
        T, mu, st, r = Tn, mun, stn, rn
    raise ConvergenceFailure("fixed-(S, N) solve did not converge")
