"""Lehmann-sum correlators: spectral combs, response kernels, covariances.

Conventions.  Heisenberg operators evolve with ``K = H - mu N``,
``A(t) = exp(i t K) A exp(-i t K)``.  Fourier transforms use the kernel
``exp(-i omega t)``, so a comb ``{(omega_l, w_l)}`` represents the time
function ``(1/2 pi) sum_l w_l exp(-i omega_l t)``.  Two-frequency combs
represent ``(1/2 pi)^2 sum_l w_l exp(-i omega1_l s1 - i omega2_l s2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MissingCouplingTable, ValidationError
from .linalg import MonotoneFunction, monotone_function
from .model import SystemSpec
from .thermal import ThermalState, cesaro_limit, chi_T_mu_state, suzuki_limit

MERGE_ATOL = 1e-10
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SpectralComb:
    """Dirac lines with complex weights.

    ``omegas`` has shape ``(n,)`` for two-point combs and ``(n, 2)`` for
    three-point combs.  Lines are sorted and near-equal frequencies merged.
    """

    omegas: np.ndarray
    weights: np.ndarray
    labels: tuple = ()

    @property
    def order(self) -> int:
        return 2 if self.omegas.ndim == 1 else 3

    def __len__(self) -> int:
        return self.weights.shape[0]

    def time_domain(self, *times) -> np.ndarray:
        """Evaluate the time function on arrays of times (one or two)."""
        if len(times) != self.order - 1:
            raise ValidationError(f"a comb of order {self.order} takes {self.order - 1} time argument(s)")
        if self.order == 2:
            (t,) = times
            t = np.asarray(t, dtype=float)
            ph = np.exp(-1j * np.multiply.outer(t, self.omegas))
            return ph @ self.weights / TWO_PI
        s1, s2 = np.broadcast_arrays(*(np.asarray(s, dtype=float) for s in times))
        ph = np.exp(
            -1j * (np.multiply.outer(s1, self.omegas[:, 0]) + np.multiply.outer(s2, self.omegas[:, 1]))
        )
        return ph @ self.weights / TWO_PI**2

    def scaled(self, factor) -> "SpectralComb":
        """Multiply every weight by ``factor`` (scalar or per-line array)."""
        return replace(self, weights=self.weights * factor)

    def pruned(self, atol: float = 0.0) -> "SpectralComb":
        keep = np.abs(self.weights) > atol
        return replace(self, omegas=self.omegas[keep], weights=self.weights[keep])

    def broadened(self, omega_grid, eta: float) -> np.ndarray:
        """Lorentzian-broadened density ``sum_l w_l L_eta(omega - omega_l)``.

        Presentation helper for two-point combs.
        """
        if self.order != 2:
            raise ValidationError("broadening is defined for two-point combs")
        x = np.subtract.outer(np.asarray(omega_grid, float), self.omegas)
        return (eta / np.pi / (x * x + eta * eta)) @ self.weights

    def weight_at(self, omega, atol: float = MERGE_ATOL) -> complex:
        """Weight of the line at ``omega`` (0 if absent)."""
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        d = np.abs(self.omegas - om) if self.order == 2 else np.max(np.abs(self.omegas - om), axis=1)
        hit = np.nonzero(d <= atol)[0]
        return complex(self.weights[hit].sum()) if hit.size else 0.0j


def _merge(omegas: np.ndarray, weights: np.ndarray, atol: float = MERGE_ATOL):
    """Sort lines and merge frequencies closer than ``atol``."""
    if omegas.ndim == 1:
        order = np.argsort(omegas, kind="stable")
        om, w = omegas[order], weights[order]
        if om.size == 0:
            return om, w
        new = np.concatenate([[True], np.diff(om) > atol])
        ids = np.cumsum(new) - 1
        n = ids[-1] + 1
        wsum = np.zeros(n, complex)
        np.add.at(wsum, ids, w)
        osum = np.zeros(n)
        np.add.at(osum, ids, om)
        cnt = np.bincount(ids, minlength=n)
        return osum / cnt, wsum
    # two frequencies: cluster on the first, then on the second within clusters
    order = np.lexsort((omegas[:, 1], omegas[:, 0]))
    om, w = omegas[order], weights[order]
    if om.shape[0] == 0:
        return om, w
    new1 = np.concatenate([[True], np.diff(om[:, 0]) > atol])
    g1 = np.cumsum(new1) - 1
    out_o, out_w = [], []
    for g in range(g1[-1] + 1):
        sel = g1 == g
        o1 = om[sel, 0].mean()
        o2, w2 = _merge(om[sel, 1], w[sel], atol)
        out_o.append(np.column_stack([np.full(o2.shape, o1), o2]))
        out_w.append(w2)
    return np.concatenate(out_o), np.concatenate(out_w)


def make_comb(omegas, weights, labels=(), atol: float = MERGE_ATOL) -> SpectralComb:
    om, w = _merge(np.asarray(omegas, dtype=float), np.asarray(weights, dtype=complex), atol)
    return SpectralComb(om, w, tuple(labels))


# --------------------------------------------------------------------------
# Heisenberg picture


def heisenberg(state: ThermalState, A, t: float, t_i: float = 0.0) -> np.ndarray:
    """``exp(i (t - t_i) K) A exp(-i (t - t_i) K)`` through eigenbasis phases."""
    w = state.energies
    ph = np.exp(1j * w * (t - t_i))
    a = state.eb(A)
    return state.eig.from_eigenbasis(ph[:, None] * a * ph.conj()[None, :])


def _pair_frequencies(state: ThermalState):
    """Line frequencies ``omega_k - omega_j`` with exact zeros on degenerate pairs."""
    w = state.energies
    om = w[None, :] - w[:, None]
    scale = max(1.0, np.max(np.abs(w)))
    om = np.where(np.abs(om) <= MERGE_ATOL * scale, 0.0, om)
    return om


def _weight_pairs(state: ThermalState, om: np.ndarray, fn_pos, fn_neg) -> np.ndarray:
    """Evaluate ``p_j g(x)`` for ``x >= 0`` and ``p_k h(-x)`` for ``x < 0``."""
    x = state.beta * om
    p = state.weights
    pj = np.broadcast_to(p[:, None], om.shape)
    pk = np.broadcast_to(p[None, :], om.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        pos = pj * fn_pos(np.where(x >= 0, x, 0.0))
        neg = pk * fn_neg(np.where(x < 0, -x, 0.0))
    return np.where(x >= 0, pos, neg)


def _spectral_pairs(state: ThermalState) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies and the population differences ``p_j - p_k`` per pair."""
    om = _pair_frequencies(state)
    dp = _weight_pairs(state, om, lambda x: -np.expm1(-x), lambda y: np.expm1(-y) * 1.0)
    # for x < 0: p_j - p_k = p_k (e^{x} - 1) = p_k expm1(-y) with y = -x
    return om, dp


def two_point_lines(state: ThermalState, A, B, labels=()) -> SpectralComb:
    """Spectral comb of ``Tr{rho [A(t), B]}`` for arbitrary operators."""
    om, dp = _spectral_pairs(state)
    a, b = state.eb(A), state.eb(B)
    w = TWO_PI * dp * a * b.T
    return make_comb(om.ravel(), w.ravel(), labels)


def spectral_two_point(state: ThermalState, m: int, n: int) -> SpectralComb:
    """Spectral function of sources ``m`` and ``n`` as a delta comb.

    Line ``omega = omega_k - omega_j`` carries
    ``2 pi (p_j - p_k) <j|phi_m|k><k|phi_n|j>``.
    """
    spec = state.spec
    spec._check_index(m, n)
    return two_point_lines(state, spec.phi[m], spec.phi[n], (m, n))


def covariance_lines(state: ThermalState, A, B, f, labels=()) -> SpectralComb:
    f = monotone_function(f)
    om = _pair_frequencies(state)
    fw = _weight_pairs(state, om, f.of_exp, f.dual().of_exp)
    a, b = state.eb(A), state.eb(B)
    w = TWO_PI * fw * a * b.T
    return make_comb(om.ravel(), w.ravel(), labels)


def generalized_covariance(state: ThermalState, m: int, n: int, f) -> SpectralComb:
    """Generalized covariance comb with weights ``2 pi f(e^{-beta w}) p_j A_jk B_kj``.

    Each line is the spectral weight times ``f(e^{-beta w}) / (1 - e^{-beta w})``.
    """
    spec = state.spec
    spec._check_index(m, n)
    return covariance_lines(state, spec.phi[m], spec.phi[n], f, (m, n))


def fdr_table(state: ThermalState, m: int, n: int, f, rtol_zero: float = 1e-14):
    """Per-line comparison of a covariance comb with its spectral comb.

    Returns arrays ``(omega, ratio, coefficient, rel_dev)`` restricted to
    lines with nonzero spectral weight and nonzero frequency.
    """
    f = monotone_function(f)
    rho = spectral_two_point(state, m, n)
    cov = generalized_covariance(state, m, n, f)
    if not np.array_equal(rho.omegas, cov.omegas):
        raise ValidationError("line sets of spectral and covariance combs differ")
    scale = max(np.max(np.abs(rho.weights)), 1e-300) if len(rho) else 1.0
    keep = (np.abs(rho.weights) > rtol_zero * scale) & (rho.omegas != 0.0)
    om = rho.omegas[keep]
    ratio = cov.weights[keep] / rho.weights[keep]
    coef = f.fdr_coefficient(state.beta * om)
    dev = np.abs(ratio - coef) / np.abs(coef)
    return om, ratio, coef, dev


# --------------------------------------------------------------------------
# response kernels


@dataclass(frozen=True)
class ResponseKernel:
    """Linear response ``delta(t) Delta_inf + Delta_delayed(t)``.

    ``spectral`` is the comb of ``Tr{rho [phi_m(t), phi_n]}``; the delayed
    kernel is ``i theta(t)`` times its time function.
    """

    instantaneous: float
    spectral: SpectralComb
    beta: float
    labels: tuple = ()
    eps: float | None = None

    def delayed_comb(self) -> SpectralComb:
        """Comb whose time function, cut at ``t = 0``, is the delayed kernel."""
        return self.spectral.scaled(1j)

    def delayed(self, t) -> np.ndarray:
        """Delayed kernel on a time grid (zero for ``t < 0``)."""
        t = np.asarray(t, dtype=float)
        vals = np.real(1j * self.spectral.time_domain(t))
        return np.where(t >= 0, vals, 0.0)

    def frequency(self, omega, eps: float | None = None) -> np.ndarray:
        """``Delta_inf + G(omega + i eps)``."""
        from .analytic import spectral_reconstruct

        e = eps if eps is not None else (self.eps or default_regulator(self.spectral))
        z = np.asarray(omega, dtype=float) + 1j * e
        return self.instantaneous + spectral_reconstruct(self.spectral, z)


def default_regulator(comb: SpectralComb) -> float:
    """1e-6 times the spectral span (1e-6 for a single line)."""
    if len(comb) == 0:
        return 1e-6
    span = float(np.ptp(comb.omegas))
    return 1e-6 * (span if span > 0 else 1.0)


def linear_response(state: ThermalState, spec: SystemSpec | None, m: int, n: int) -> ResponseKernel:
    """Instantaneous and delayed parts of the linear response of ``m`` to ``n``."""
    spec = spec or state.spec
    spec._check_index(m, n)
    comb = two_point_lines(state, spec.phi[m], spec.phi[n], (m, n))
    inst = state.expect(spec.phi2(m, n))
    return ResponseKernel(inst, comb, state.beta, (m, n))


def three_point_lines(state: ThermalState, A, B, C, labels=()) -> SpectralComb:
    """Comb of ``Tr{A(t) [[rho, B(t')], C(t'')]}`` in ``s1 = t - t'``, ``s2 = t' - t''``."""
    w = state.energies
    p = state.weights
    a, b, c = state.eb(A), state.eb(B), state.eb(C)
    # term A_ab B_bc C_ca (p_b - p_c): omega1 = w_b - w_a, omega2 = w_c - w_a
    t1 = np.einsum("ab,bc,ca->abc", a, b, c) * (p[None, :, None] - p[None, None, :])
    o1 = np.broadcast_to(w[None, :, None] - w[:, None, None], t1.shape)
    o2 = np.broadcast_to(w[None, None, :] - w[:, None, None], t1.shape)
    # term A_ab C_bc B_ca (p_a - p_c): omega1 = w_b - w_a, omega2 = w_b - w_c
    t2 = np.einsum("ab,bc,ca->abc", a, c, b) * (p[:, None, None] - p[None, None, :])
    q1 = np.broadcast_to(w[None, :, None] - w[:, None, None], t2.shape)
    q2 = np.broadcast_to(w[None, :, None] - w[None, None, :], t2.shape)
    om = np.concatenate(
        [np.column_stack([o1.ravel(), o2.ravel()]), np.column_stack([q1.ravel(), q2.ravel()])]
    )
    scale = max(1.0, np.max(np.abs(w)))
    om = np.where(np.abs(om) <= MERGE_ATOL * scale, 0.0, om)
    wt = TWO_PI**2 * np.concatenate([t1.ravel(), t2.ravel()])
    return make_comb(om, wt, labels)


def spectral_three_point(state: ThermalState, m: int, n: int, k: int) -> SpectralComb:
    """Three-point spectral comb of sources ``(m, n, k)``."""
    spec = state.spec
    spec._check_index(m, n, k)
    return three_point_lines(state, spec.phi[m], spec.phi[n], spec.phi[k], (m, n, k))


@dataclass(frozen=True)
class QuadraticResponseKernel:
    """Pieces of the second-order response of ``m`` to sources ``n`` and ``k``.

    ``instantaneous``: ``Tr{rho phi_mnk}``.
    ``mixed_n`` / ``mixed_k``: spectral combs of ``(phi_mn, phi_k)`` and
    ``(phi_mk, phi_n)``; the mixed kernels are ``i theta(s)`` times them.
    ``coincident``: spectral comb of ``(phi_m, phi_nk)``, the linear response to
    the second-order coupling in the Hamiltonian, acting at ``t' = t''``.
    ``nested_nk`` / ``nested_kn``: three-point combs of ``(m, n, k)`` and
    ``(m, k, n)``.
    """

    instantaneous: float
    mixed_n: SpectralComb
    mixed_k: SpectralComb
    coincident: SpectralComb
    nested_nk: SpectralComb
    nested_kn: SpectralComb
    beta: float
    labels: tuple = ()

    def mixed(self, s) -> np.ndarray:
        """Mixed kernel paired with ``delta(t - t')``, in ``s = t - t''``."""
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, np.real(1j * self.mixed_n.time_domain(s)), 0.0)

    def delayed(self, s1, s2) -> np.ndarray:
        """Fully delayed kernel at ``s1 = t - t'`` and ``s2 = t - t''``.

        The inner commutator always holds the operator at the earlier time;
        on the diagonal ``s1 = s2`` the two sectors are averaged.
        """
        s1, s2 = np.broadcast_arrays(np.asarray(s1, float), np.asarray(s2, float))
        # t' earlier than t'' when s1 > s2
        a = -np.real(self.nested_nk.time_domain(s1, s2 - s1))
        b = -np.real(self.nested_kn.time_domain(s2, s1 - s2))
        val = np.where(s1 > s2, a, np.where(s1 < s2, b, 0.5 * (a + b)))
        return np.where((s1 >= 0) & (s2 >= 0), val, 0.0)


def quadratic_response(
    state: ThermalState, spec: SystemSpec | None, m: int, n: int, k: int, strict_tables: bool = False
) -> QuadraticResponseKernel:
    """Second-order response kernel of observable ``m`` to sources ``n, k``."""
    spec = spec or state.spec
    spec._check_index(m, n, k)
    if strict_tables and not (spec.has_second_order and spec.has_third_order):
        raise MissingCouplingTable("coupling tables required for quadratic response")
    P = spec.phi
    return QuadraticResponseKernel(
        instantaneous=state.expect(spec.phi3(m, n, k)),
        mixed_n=two_point_lines(state, spec.phi2(m, n), P[k], (m, n, k)),
        mixed_k=two_point_lines(state, spec.phi2(m, k), P[n], (m, k, n)),
        coincident=two_point_lines(state, P[m], spec.phi2(n, k), (m, n, k)),
        nested_nk=three_point_lines(state, P[m], P[n], P[k], (m, n, k)),
        nested_kn=three_point_lines(state, P[m], P[k], P[n], (m, k, n)),
        beta=state.beta,
        labels=(m, n, k),
    )


# --------------------------------------------------------------------------
# relaxation


def bkm_time(state: ThermalState, A, B, t) -> np.ndarray:
    """``<A(t); B>`` (BKM) on a grid of times."""
    w = state.energies
    a, b = state.eb(A), state.eb(B)
    c = state.bkm_kernel() * a * b.T
    dw = w[:, None] - w[None, :]
    t = np.asarray(t, dtype=float)
    ph = np.exp(1j * np.multiply.outer(t, dw.ravel()))
    return np.real(ph @ c.ravel())


def relaxation_function(state: ThermalState, spec: SystemSpec | None, m: int, n: int, t_grid, L: float | None = None) -> np.ndarray:
    """Relaxation function of ``m`` after a source step in ``n`` is switched off.

    ``Psi(s) = theta(s) [beta <phi_m(s); phi_n>_c - chi_T + <phi_mn> ... ]``
    evaluated so that ``Psi(0-)`` equals the fixed-(S, N) susceptibility and
    the jump at ``s = 0`` equals the instantaneous response.
    """
    spec = spec or state.spec
    spec._check_index(m, n)
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0):
        raise ValidationError("t_grid must be strictly ascending")
    beta = state.beta
    A, B = spec.phi[m], spec.phi[n]
    ea, eb_ = state.expect(A), state.expect(B)
    static = beta * (bkm_time(state, A, B, 0.0) - ea * eb_)
    inst = state.expect(spec.phi2(m, n))
    if L is None:
        L = suzuki_limit(spec, beta, state.mu)[m, n]
    dyn = beta * (bkm_time(state, A, B, t) - ea * eb_)
    return np.where(t >= 0, dyn - static - inst, 0.0) + static + inst - L


def kubo_relaxation_check(state: ThermalState, m: int, n: int) -> float:
    """Max relative deviation between the delayed comb and ``i beta omega`` times the BKM comb."""
    rho = spectral_two_point(state, m, n)
    bkm = generalized_covariance(state, m, n, "BKM")
    delayed = rho.scaled(1j)
    target = bkm.weights * (1j * state.beta * bkm.omegas)
    scale = max(np.max(np.abs(delayed.weights)), 1e-300)
    return float(np.max(np.abs(delayed.weights - target)) / scale)


__all__ = [
    "SpectralComb",
    "ResponseKernel",
    "QuadraticResponseKernel",
    "heisenberg",
    "spectral_two_point",
    "generalized_covariance",
    "linear_response",
    "quadratic_response",
    "spectral_three_point",
    "relaxation_function",
    "bkm_time",
    "fdr_table",
    "cesaro_limit",
    "chi_T_mu_state",
]
