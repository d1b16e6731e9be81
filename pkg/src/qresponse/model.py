"""Finite-dimensional systems with source-dependent Hamiltonians.

A system is a base Hamiltonian ``H0`` (at the reference sources ``j_init``), a
conserved number operator and a list of coupling operators.  Moving the
sources away from ``j_init`` by ``dj`` gives

    H(j) = H0 - sum_m dj_m phi_m - 1/2 sum_mn dj_m dj_n phi_mn
              - 1/6 sum_mnk dj_m dj_n dj_k phi_mnk

and the conjugate observables ``phi_m(j) = -dH/dj_m``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionTooLarge,
    IndexOutOfRange,
    NonCommutingNumber,
    ValidationError,
)
from .linalg import check_hermitian, commutator

MAX_DIM = 2**12
COMMUTE_ATOL = 1e-10

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class TimeParity:
    """Per-source signs under time reversal and a real-basis flag.

    ``basis_real`` asserts that complex conjugation in the computational basis
    maps ``H0`` to itself and ``phi_n`` to ``eps[n] * phi_n``.
    """

    eps: tuple[int, ...]
    basis_real: bool = False

    def __post_init__(self):
        if any(e not in (1, -1) for e in self.eps):
            raise ValidationError("time parities must be +1 or -1")


@dataclass(frozen=True)
class SourceCoupling:
    """Coupling operators belonging to one source index ``m``.

    ``phi_mn`` maps a partner index ``n`` to the second-order operator and
    ``phi_mnk`` maps ``(n, k)`` to the third-order one.  Missing entries are
    zero.
    """

    phi_m: np.ndarray
    phi_mn: Mapping[int, np.ndarray] = field(default_factory=dict)
    phi_mnk: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)


class SystemSpec:
    """A system with ``M`` sources.

    Parameters
    ----------
    H0 : array_like
        Hamiltonian at ``j_init``.
    N_op : array_like or None
        Conserved number operator; ``None`` means the zero matrix.
    sources : sequence of SourceCoupling or arrays
        Coupling operators; a bare array is taken as ``phi_m``.
    j_init : sequence of float, optional
        Reference source values, zero by default.
    labels : sequence of str, optional
    parity : TimeParity, optional
    """

    def __init__(
        self,
        H0,
        N_op=None,
        sources: Sequence = (),
        j_init: Sequence[float] | None = None,
        labels: Sequence[str] | None = None,
        parity: TimeParity | None = None,
    ):
        self.H0 = check_hermitian(H0, "H0")
        d = self.H0.shape[0]
        if d > MAX_DIM:
            raise DimensionTooLarge(f"dimension {d} exceeds {MAX_DIM}")
        self.N_op = np.zeros((d, d), complex) if N_op is None else check_hermitian(N_op, "N_op")
        if self.N_op.shape != (d, d):
            raise DimensionMismatch("N_op has the wrong shape")
        self.has_number = bool(np.any(self.N_op != 0))
        if self.has_number:
            c = np.max(np.abs(commutator(self.H0, self.N_op)))
            if c > COMMUTE_ATOL * max(1.0, np.max(np.abs(self.H0))):
                raise NonCommutingNumber(f"[H0, N] has norm {c:.3e}")

        couplings = [s if isinstance(s, SourceCoupling) else SourceCoupling(s) for s in sources]
        M = len(couplings)
        self.phi = [check_hermitian(c.phi_m, f"phi[{m}]") for m, c in enumerate(couplings)]
        for m, P in enumerate(self.phi):
            if P.shape != (d, d):
                raise DimensionMismatch(f"phi[{m}] has shape {P.shape}, expected {(d, d)}")
        self._phi2 = self._collect(couplings, 2, d)
        self._phi3 = self._collect(couplings, 3, d)
        self.j_init = np.zeros(M) if j_init is None else np.asarray(j_init, dtype=float).copy()
        if self.j_init.shape != (M,):
            raise DimensionMismatch("j_init length differs from the number of sources")
        self.labels = list(labels) if labels is not None else [f"s{m}" for m in range(M)]
        if len(self.labels) != M:
            raise DimensionMismatch("one label per source required")
        if parity is not None and len(parity.eps) != M:
            raise DimensionMismatch("one time parity per source required")
        self.parity = parity

    @staticmethod
    def _collect(couplings, order: int, d: int) -> dict:
        """Gather per-source rows into a symmetric table keyed by sorted tuples."""
        raw: dict[tuple, list] = {}
        for m, c in enumerate(couplings):
            table = c.phi_mn if order == 2 else c.phi_mnk
            for key, op in table.items():
                idx = (m, key) if order == 2 else (m, *key)
                raw.setdefault(tuple(sorted(idx)), []).append(
                    (idx, check_hermitian(op, f"coupling {idx}"))
                )
        out = {}
        for key, entries in raw.items():
            ops = [e[1] for e in entries]
            if any(o.shape != (d, d) for o in ops):
                raise DimensionMismatch(f"coupling {key} has the wrong shape")
            if any(np.max(np.abs(o - ops[0])) > 1e-12 for o in ops[1:]):
                warnings.warn(f"asymmetric coupling table at {key}; symmetrizing", stacklevel=3)
            # permutations that were not given are taken equal to the given ones
            avg = sum(ops) / len(ops)
            if avg.shape != (d, d):
                raise DimensionMismatch(f"coupling {key} has the wrong shape")
            out[key] = avg
        return out

    # -- basic properties --------------------------------------------------

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    @property
    def n_sources(self) -> int:
        return len(self.phi)

    @property
    def has_second_order(self) -> bool:
        return bool(self._phi2)

    @property
    def has_third_order(self) -> bool:
        return bool(self._phi3)

    def _check_index(self, *idx: int):
        for m in idx:
            if not (0 <= int(m) < self.n_sources):
                raise IndexOutOfRange(f"source index {m} outside 0..{self.n_sources - 1}")

    def phi2(self, m: int, n: int) -> np.ndarray:
        """Second-order coupling ``phi_mn`` (zero if absent)."""
        self._check_index(m, n)
        op = self._phi2.get(tuple(sorted((m, n))))
        return np.zeros((self.dim, self.dim), complex) if op is None else op

    def phi3(self, m: int, n: int, k: int) -> np.ndarray:
        """Third-order coupling ``phi_mnk`` (zero if absent)."""
        self._check_index(m, n, k)
        op = self._phi3.get(tuple(sorted((m, n, k))))
        return np.zeros((self.dim, self.dim), complex) if op is None else op

    def _dj(self, j) -> np.ndarray:
        j = np.asarray(j, dtype=float)
        if j.shape != self.j_init.shape:
            raise DimensionMismatch(
                f"source vector has length {j.size}, expected {self.n_sources}"
            )
        return j - self.j_init

    def with_sources(self, extra: Sequence, labels: Sequence[str], eps: Sequence[int] | None = None):
        """Return a copy with additional first-order sources appended."""
        couplings = [SourceCoupling(p) for p in self.phi] + [SourceCoupling(p) for p in extra]
        parity = None
        if self.parity is not None and eps is not None:
            parity = TimeParity(tuple(self.parity.eps) + tuple(eps), self.parity.basis_real)
        spec = SystemSpec(
            self.H0,
            self.N_op if self.has_number else None,
            couplings,
            list(self.j_init) + [0.0] * len(extra),
            self.labels + list(labels),
            parity,
        )
        spec._phi2 = dict(self._phi2)
        spec._phi3 = dict(self._phi3)
        return spec


def hamiltonian_at(spec: SystemSpec, j) -> np.ndarray:
    """H(j) from the cubic source expansion around ``spec.j_init``."""
    dj = spec._dj(j)
    H = spec.H0.copy()
    for m, djm in enumerate(dj):
        if djm:
            H -= djm * spec.phi[m]
    for (m, n), op in spec._phi2.items():
        # sum over ordered pairs: off-diagonal keys appear twice
        mult = 1 if m == n else 2
        H -= 0.5 * mult * dj[m] * dj[n] * op
    for key, op in spec._phi3.items():
        mult = len(set(itertools.permutations(key)))
        H -= mult / 6.0 * dj[key[0]] * dj[key[1]] * dj[key[2]] * op
    return 0.5 * (H + H.conj().T)


def observable_at(spec: SystemSpec, m: int, j) -> np.ndarray:
    """phi_m(j) = -dH/dj_m."""
    spec._check_index(m)
    dj = spec._dj(j)
    out = spec.phi[m].copy()
    for n in range(spec.n_sources):
        if dj[n]:
            key = tuple(sorted((m, n)))
            if key in spec._phi2:
                out += dj[n] * spec._phi2[key]
    if spec._phi3:
        for n in range(spec.n_sources):
            for k in range(spec.n_sources):
                if dj[n] and dj[k]:
                    key = tuple(sorted((m, n, k)))
                    if key in spec._phi3:
                        out += 0.5 * dj[n] * dj[k] * spec._phi3[key]
    return out


# --------------------------------------------------------------------------
# builders


def site_operator(op: np.ndarray, site: int, L: int) -> np.ndarray:
    """Embed a single-site 2x2 operator at ``site`` of an ``L``-site chain."""
    out = np.array([[1.0 + 0j]])
    for s in range(L):
        out = np.kron(out, op if s == site else ID2)
    return out


def _check_chain(L: int):
    if L < 1:
        raise ValidationError("chain needs at least one site")
    if 2**L > MAX_DIM:
        raise DimensionTooLarge(f"2^{L} exceeds the dimension cap {MAX_DIM}")


def build_qubit(omega0: float, tilt: float = 0.0) -> SystemSpec:
    """Two-level system ``H0 = omega0/2 sigma_z`` with one source.

    The source couples through ``cos(tilt) sigma_x + sin(tilt) sigma_z``;
    ``tilt = 0`` gives the transverse drive, whose even-order responses
    vanish by symmetry.  The number operator is ``(1 + sigma_z)/2``.
    """
    if not omega0 > 0:
        raise ValidationError("omega0 must be positive")
    phi = np.cos(tilt) * SX + np.sin(tilt) * SZ
    return SystemSpec(
        0.5 * omega0 * SZ,
        0.5 * (ID2 + SZ),
        [phi],
        labels=["s"] if tilt else ["sx"],
        parity=TimeParity((1,), basis_real=True),
    )


def build_transverse_ising(L: int, J: float, h: float, periodic: bool = False) -> SystemSpec:
    """Transverse-field Ising chain ``-J sum z_i z_{i+1} - h sum x_i``.

    Sources are the site operators ``sigma^x_i`` (labels ``x0..``) followed by
    ``sigma^z_i`` (labels ``z0..``).  The magnetization count
    ``sum (1 + sigma^z_i)/2`` is conserved only at ``h = 0``; for ``h != 0``
    the number operator is the zero matrix.
    """
    _check_chain(L)
    d = 2**L
    X = [site_operator(SX, i, L) for i in range(L)]
    Z = [site_operator(SZ, i, L) for i in range(L)]
    H = np.zeros((d, d), complex)
    bonds = [(i, i + 1) for i in range(L - 1)]
    if periodic and L > 2:
        bonds.append((L - 1, 0))
    for a, b in bonds:
        H -= J * Z[a] @ Z[b]
    for i in range(L):
        H -= h * X[i]
    N = None
    if h == 0:
        N = sum(0.5 * (np.eye(d) + z) for z in Z)
    labels = [f"x{i}" for i in range(L)] + [f"z{i}" for i in range(L)]
    return SystemSpec(H, N, X + Z, labels=labels, parity=TimeParity((1,) * (2 * L), True))


def build_xxz_chain(
    L: int, J: float = 1.0, delta: float = 0.5, fields: Sequence[float] | None = None
) -> SystemSpec:
    """Particle-conserving XXZ chain with site fields.

    ``H0 = J sum (x_i x_{i+1} + y_i y_{i+1} + delta z_i z_{i+1}) + sum h_i z_i``
    conserves ``N = sum (1 + sigma^z_i)/2``.  Sources are the site operators
    ``sigma^z_i`` and the bond hopping terms, all commuting with ``N`` so that
    the grand-canonical state stays well defined for shifted sources.
    """
    _check_chain(L)
    d = 2**L
    X = [site_operator(SX, i, L) for i in range(L)]
    Y = [site_operator(SY, i, L) for i in range(L)]
    Z = [site_operator(SZ, i, L) for i in range(L)]
    h = np.zeros(L) if fields is None else np.asarray(fields, dtype=float)
    if h.shape != (L,):
        raise DimensionMismatch("one field per site required")
    H = np.zeros((d, d), complex)
    hops = []
    for i in range(L - 1):
        hop = X[i] @ X[i + 1] + Y[i] @ Y[i + 1]
        hops.append(hop)
        H += J * (hop + delta * Z[i] @ Z[i + 1])
    for i in range(L):
        H += h[i] * Z[i]
    N = sum(0.5 * (np.eye(d) + z) for z in Z)
    labels = [f"z{i}" for i in range(L)] + [f"hop{i}" for i in range(L - 1)]
    return SystemSpec(
        H, N, Z + hops, labels=labels, parity=TimeParity((1,) * len(labels), True)
    )
