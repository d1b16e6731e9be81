"""Two-point-measurement work statistics and measurement partition functions.

Time reversal is complex conjugation in the computational basis, which is
valid for systems flagged ``basis_real`` whose couplings satisfy
``conj(phi_m) = eps_m phi_m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dynamics import DriveProtocol, propagate
from .errors import NotTimeReversalSymmetric, ValidationError
from .linalg import eig_hermitian
from .model import SystemSpec, TimeParity, hamiltonian_at
from .thermal import ThermalState, gibbs

MERGE_ATOL = 1e-10
ZETA_SMALL = 1e-4


@dataclass(frozen=True)
class WorkDistribution:
    """Work outcomes ``W`` with probabilities ``p`` (sorted by ``W``)."""

    W: np.ndarray
    p: np.ndarray
    tag: str = "forward"

    def mean(self) -> float:
        return float(self.p @ self.W)

    def prob_at(self, w: float, atol: float = 1e-8) -> float:
        hit = np.abs(self.W - w) <= atol
        return float(self.p[hit].sum())


@dataclass(frozen=True)
class MeasurementPartition:
    beta: float
    zeta: float
    mu: float
    log_value: float

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))


def _final_hamiltonian(spec: SystemSpec, mu: float, j) -> np.ndarray:
    return hamiltonian_at(spec, j) - mu * spec.N_op


def _transition_matrix(state: ThermalState, Kf: np.ndarray, U: np.ndarray):
    """Final energies and ``T_ba = |<b_f| U |a_i>|^2``."""
    fin = eig_hermitian(Kf)
    amp = fin.vectors.conj().T @ U @ state.eig.vectors
    return fin.eigenvalues, np.abs(amp) ** 2


def _merge_outcomes(W: np.ndarray, p: np.ndarray):
    order = np.argsort(W, kind="stable")
    W, p = W[order], p[order]
    new = np.concatenate([[True], np.diff(W) > MERGE_ATOL])
    ids = np.cumsum(new) - 1
    n = ids[-1] + 1
    ps = np.bincount(ids, weights=p, minlength=n)
    ws = np.bincount(ids, weights=W, minlength=n) / np.bincount(ids, minlength=n)
    return ws, ps


def work_distribution(
    spec: SystemSpec, state: ThermalState, protocol: DriveProtocol, U_final: np.ndarray, tag: str = "forward"
) -> WorkDistribution:
    """Two-point-measurement work distribution.

    Outcomes are differences of eigenvalues of ``H(j_f) - mu N`` and
    ``H(j_i) - mu N``.  Summing the per-vector transition probabilities over
    equal outcomes makes the result independent of the basis chosen inside
    degenerate levels.
    """
    ef, T = _transition_matrix(state, _final_hamiltonian(spec, state.mu, protocol.j_final), U_final)
    ei = state.energies
    W = (ef[:, None] - ei[None, :]).ravel()
    p = (T * state.weights[None, :]).ravel()
    W, p = _merge_outcomes(W, p)
    keep = p > 0
    p = p[keep]
    return WorkDistribution(W[keep], p / p.sum(), tag)


def characteristic_Zw(dist: WorkDistribution, xi) -> np.ndarray | float:
    """``Z_W(xi) = sum_W p(W) exp(-xi W)``."""
    xi = np.asarray(xi, dtype=float)
    out = np.exp(-np.multiply.outer(xi, dist.W)) @ dist.p
    return float(out) if out.ndim == 0 else out


def log_measurement_partition(
    Ki_energies: np.ndarray, Kf_energies: np.ndarray, T: np.ndarray, beta: float, zeta: float
) -> float:
    """``ln sum_ab exp(-beta e_a - zeta e_b) |<b|U|a>|^2``."""
    with np.errstate(divide="ignore"):
        lt = np.log(T)
    return float(logsumexp(-beta * Ki_energies[None, :] - zeta * Kf_energies[:, None] + lt))


def measurement_partition(
    spec: SystemSpec,
    state: ThermalState,
    protocol: DriveProtocol,
    zeta: float,
    U_final: np.ndarray,
    beta: float | None = None,
    j_final=None,
) -> MeasurementPartition:
    """``Z_M = Tr{exp(-beta K_i) U^dag exp(-zeta K_f) U}`` with ``K = H - mu N``.

    ``beta`` defaults to the state's inverse temperature; ``j_final``
    overrides the final source vector (for derivatives in ``j_f``).
    """
    if zeta < 0:
        raise ValidationError("zeta must be non-negative")
    b = state.beta if beta is None else float(beta)
    if b < 0:
        raise ValidationError("beta must be non-negative")
    jf = protocol.j_final if j_final is None else np.asarray(j_final, float)
    ef, T = _transition_matrix(state, _final_hamiltonian(spec, state.mu, jf), U_final)
    return MeasurementPartition(b, float(zeta), state.mu, log_measurement_partition(state.energies, ef, T, b, zeta))


def final_energy_from_ZM(spec, state, protocol, U_final, zeta: float = ZETA_SMALL) -> float:
    """``-d ln Z_M / d zeta`` at zero, one Richardson step on forward differences."""
    lz0 = measurement_partition(spec, state, protocol, 0.0, U_final).log_value

    def slope(z):
        return (measurement_partition(spec, state, protocol, z, U_final).log_value - lz0) / z

    return -(2 * slope(zeta / 2) - slope(zeta))


def final_observable_from_ZM(
    spec, state, protocol, U_final, m: int, zeta: float = ZETA_SMALL, dj: float = 1e-4
) -> float:
    """``(1/zeta) d ln Z_M / d j_f^m`` extrapolated to ``zeta = 0``."""
    spec._check_index(m)
    jf = protocol.j_final
    e = np.zeros_like(jf)
    e[m] = dj

    def g(z):
        up = measurement_partition(spec, state, protocol, z, U_final, j_final=jf + e).log_value
        dn = measurement_partition(spec, state, protocol, z, U_final, j_final=jf - e).log_value
        return (up - dn) / (2 * dj * z)

    return 2 * g(zeta / 2) - g(zeta)


def jarzynski_check(dist: WorkDistribution, state_i: ThermalState, spec: SystemSpec, protocol: DriveProtocol) -> float:
    """``|<exp(-beta W)> - Z(j_f)/Z(j_i)|``."""
    beta = state_i.beta
    st_f = gibbs(spec, beta, state_i.mu, protocol.j_final)
    lhs = characteristic_Zw(dist, beta)
    return abs(lhs - np.exp(st_f.logZ - state_i.logZ))


def free_energy_change(spec: SystemSpec, state_i: ThermalState, protocol: DriveProtocol) -> float:
    """Grand potential difference ``Omega_f - Omega_i`` at fixed ``(beta, mu)``."""
    st_f = gibbs(spec, state_i.beta, state_i.mu, protocol.j_final)
    return -(st_f.logZ - state_i.logZ) / state_i.beta


def time_reverse_protocol(protocol: DriveProtocol, parities: TimeParity) -> DriveProtocol:
    """Mirror the protocol about the window midpoint and apply the source parities."""
    return protocol.reversed(parities.eps)


def check_time_reversal(spec: SystemSpec, parities: TimeParity | None, j_i, atol: float = 1e-12):
    """Raise :class:`NotTimeReversalSymmetric` unless conjugation is a valid reversal."""
    if parities is None or not parities.basis_real:
        raise NotTimeReversalSymmetric("system is not flagged basis_real")
    eps = np.asarray(parities.eps, dtype=float)
    if np.max(np.abs(eps * np.asarray(j_i) - np.asarray(j_i)), initial=0.0) > atol:
        raise NotTimeReversalSymmetric("initial sources are not invariant under time reversal")
    if np.max(np.abs(spec.H0.imag)) > atol or np.max(np.abs(spec.N_op.imag)) > atol:
        raise NotTimeReversalSymmetric("H0 or N is not real in the computational basis")
    for m, P in enumerate(spec.phi):
        if np.max(np.abs(P.conj() - eps[m] * P)) > atol:
            raise NotTimeReversalSymmetric(f"source {m} does not have time parity {int(eps[m])}")
    for table in (spec._phi2, spec._phi3):
        for key, P in table.items():
            sign = np.prod(eps[list(key)])
            if np.max(np.abs(P.conj() - sign * P)) > atol:
                raise NotTimeReversalSymmetric(f"coupling {key} breaks time-reversal symmetry")


@dataclass(frozen=True)
class CrooksResult:
    max_deviation: float
    forward: WorkDistribution
    reverse: WorkDistribution
    delta_omega: float


def crooks_check(
    spec: SystemSpec,
    state: ThermalState,
    protocol: DriveProtocol,
    parities: TimeParity | None = None,
    steps: int = 2000,
    p_min: float = 1e-12,
) -> CrooksResult:
    """Compare ``p_F(W) / p_R(-W)`` with ``exp(beta (W - dOmega))``.

    Forward and reversed protocols are propagated on mirrored grids, so the
    reversed propagator is exactly the conjugated inverse of the forward one.
    """
    parities = parities or spec.parity
    check_time_reversal(spec, parities, protocol.j_initial)
    rev = time_reverse_protocol(protocol, parities)
    fw = propagate(spec, state, protocol, steps)
    dist_f = work_distribution(spec, state, protocol, fw.U_final)
    st_r = gibbs(spec, state.beta, state.mu, rev.j_initial)
    bw = propagate(spec, st_r, rev, steps)
    dist_r = work_distribution(spec, st_r, rev, bw.U_final, tag="reverse")
    dO = free_energy_change(spec, state, protocol)
    worst = 0.0
    for w, p in zip(dist_f.W, dist_f.p):
        if p <= p_min:
            continue
        pr = dist_r.prob_at(-w)
        target = np.exp(state.beta * (w - dO))
        dev = np.inf if pr == 0 else abs(p / pr / target - 1.0)
        worst = max(worst, dev)
    return CrooksResult(float(worst), dist_f, dist_r, dO)


__all__ = [
    "WorkDistribution",
    "MeasurementPartition",
    "work_distribution",
    "characteristic_Zw",
    "measurement_partition",
    "final_energy_from_ZM",
    "final_observable_from_ZM",
    "jarzynski_check",
    "free_energy_change",
    "time_reverse_protocol",
    "check_time_reversal",
    "crooks_check",
    "CrooksResult",
]
