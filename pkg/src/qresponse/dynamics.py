"""Driven unitary evolution, Volterra predictions and mean work."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import lfilter

from .correlators import (
    QuadraticResponseKernel,
    ResponseKernel,
    SpectralComb,
    linear_response,
    quadratic_response,
)
from .errors import DimensionMismatch, GridMismatch, StepTooCoarse, ValidationError
from .model import SystemSpec, hamiltonian_at, observable_at
from .thermal import ThermalState

DEFAULT_STEPS = 2000
UNITARITY_TOL = 1e-8
FORMS = ("constant", "step", "ramp", "pulse", "sinusoid", "tabulated")


# --------------------------------------------------------------------------
# protocols


@dataclass(frozen=True)
class SourceDrive:
    """Time dependence of one source inside the drive window.

    Forms and parameters (all values are offsets from the initial plateau):

    ``constant``   no parameters
    ``step``       ``height``, optional ``t_step`` (default: window start)
    ``ramp``       ``delta``: linear change over the window
    ``pulse``      ``amplitude``, ``center``, ``width``: gaussian bump
    ``sinusoid``   ``amplitude``, ``frequency``, optional ``phase``
    ``tabulated``  ``times``, ``values``: piecewise-linear samples
    """

    kind: str = "constant"
    params: tuple = ()

    @classmethod
    def make(cls, kind: str, **params) -> "SourceDrive":
        if kind not in FORMS:
            raise ValidationError(f"unknown drive form {kind!r}; expected one of {FORMS}")
        frozen = []
        for key, val in sorted(params.items()):
            if isinstance(val, (list, tuple, np.ndarray)):
                val = tuple(float(v) for v in np.asarray(val, dtype=float).ravel())
            else:
                val = float(val)
            frozen.append((key, val))
        drive = cls(kind, tuple(frozen))
        drive._validate()
        return drive

    @property
    def p(self) -> dict:
        return dict(self.params)

    def _validate(self):
        p = self.p
        need = {
            "constant": (),
            "step": ("height",),
            "ramp": ("delta",),
            "pulse": ("amplitude", "center", "width"),
            "sinusoid": ("amplitude", "frequency"),
            "tabulated": ("times", "values"),
        }[self.kind]
        optional = {"step": ("t_step",), "sinusoid": ("phase",)}.get(self.kind, ())
        missing = [k for k in need if k not in p]
        extra = [k for k in p if k not in need and k not in optional]
        if missing or extra:
            raise ValidationError(
                f"drive {self.kind!r}: missing {missing or 'none'}, unexpected {extra or 'none'}"
            )
        if self.kind == "pulse" and not p["width"] > 0:
            raise ValidationError("pulse width must be positive")
        if self.kind == "tabulated":
            t, v = np.asarray(p["times"]), np.asarray(p["values"])
            if t.shape != v.shape or t.size < 2:
                raise ValidationError("tabulated drive needs matching times/values, at least two")
            if np.any(np.diff(t) <= 0):
                raise ValidationError("tabulated times must be strictly increasing")

    def offset(self, t: np.ndarray, t_i: float, t_f: float) -> np.ndarray:
        """Offset from the initial plateau for ``t_i < t < t_f``."""
        p = self.p
        if self.kind == "constant":
            return np.zeros_like(t)
        if self.kind == "step":
            return np.where(t >= p.get("t_step", t_i), p["height"], 0.0)
        if self.kind == "ramp":
            return p["delta"] * (t - t_i) / (t_f - t_i)
        if self.kind == "pulse":
            return p["amplitude"] * np.exp(-0.5 * ((t - p["center"]) / p["width"]) ** 2)
        if self.kind == "sinusoid":
            return p["amplitude"] * np.sin(p["frequency"] * (t - t_i) + p.get("phase", 0.0))
        return np.interp(t, np.asarray(p["times"]), np.asarray(p["values"]))


@dataclass(frozen=True)
class DriveProtocol:
    """Source values ``j(t)`` with plateaus outside ``[t_i, t_f]``.

    ``mirror`` and ``sign`` encode time reversal: the mirrored protocol is
    ``sign * j(t_i + t_f - t)``.
    """

    t_i: float
    t_f: float
    j_i: tuple
    drives: tuple
    mirror: bool = False
    sign: tuple | None = None

    def __post_init__(self):
        if not self.t_f > self.t_i:
            raise ValidationError("protocol window needs t_f > t_i")
        if len(self.drives) != len(self.j_i):
            raise DimensionMismatch("one drive per source required")
        if self.sign is not None and len(self.sign) != len(self.j_i):
            raise DimensionMismatch("one sign per source required")

    @classmethod
    def build(
        cls, t_i: float, t_f: float, j_i: Sequence[float], drives: Mapping[int, SourceDrive] | None = None
    ) -> "DriveProtocol":
        j_i = tuple(float(x) for x in j_i)
        drives = drives or {}
        for n in drives:
            if not 0 <= n < len(j_i):
                raise ValidationError(f"drive given for unknown source {n}")
        seq = tuple(drives.get(n, SourceDrive()) for n in range(len(j_i)))
        return cls(float(t_i), float(t_f), j_i, seq)

    @property
    def n_sources(self) -> int:
        return len(self.j_i)

    def _base(self, t: np.ndarray) -> np.ndarray:
        tc = np.clip(t, self.t_i, self.t_f)
        out = np.empty(t.shape + (self.n_sources,))
        for n, d in enumerate(self.drives):
            val = self.j_i[n] + d.offset(tc, self.t_i, self.t_f)
            out[..., n] = np.where(t <= self.t_i, self.j_i[n], val)
        return out

    def __call__(self, t) -> np.ndarray:
        """Source vector(s) at time(s) ``t``; shape ``t.shape + (M,)``."""
        t = np.asarray(t, dtype=float)
        if self.mirror:
            t = self.t_i + self.t_f - t
        out = self._base(t)
        if self.sign is not None:
            out = out * np.asarray(self.sign, dtype=float)
        return out

    @property
    def j_initial(self) -> np.ndarray:
        return self(self.t_i)

    @property
    def j_final(self) -> np.ndarray:
        return self(self.t_f)

    def reversed(self, eps: Sequence[int]) -> "DriveProtocol":
        """Time-reversed protocol ``eps * j(t_i + t_f - t)``."""
        eps = tuple(int(e) for e in eps)
        if len(eps) != self.n_sources or any(e not in (1, -1) for e in eps):
            raise ValidationError("time parities must be +1 or -1, one per source")
        old = self.sign or (1,) * self.n_sources
        new = tuple(a * b for a, b in zip(old, eps))
        return DriveProtocol(
            self.t_i, self.t_f, self.j_i, self.drives, not self.mirror,
            None if all(s == 1 for s in new) else new,
        )

    def shifted(self, amplitude: float) -> "DriveProtocol":
        """Scale every drive offset by ``amplitude`` (used for convergence fits)."""
        drives = []
        for d in self.drives:
            p = d.p
            for key in ("height", "delta", "amplitude"):
                if key in p:
                    p[key] *= amplitude
            if "values" in p:
                p["values"] = tuple(amplitude * np.asarray(p["values"]))
            drives.append(SourceDrive.make(d.kind, **p))
        return DriveProtocol(self.t_i, self.t_f, self.j_i, tuple(drives), self.mirror, self.sign)


def constant_protocol(spec: SystemSpec, t_i: float = 0.0, t_f: float = 1.0) -> DriveProtocol:
    return DriveProtocol.build(t_i, t_f, spec.j_init)


# --------------------------------------------------------------------------
# propagation


@dataclass(frozen=True)
class Trajectory:
    """Expectation series on a uniform grid plus the final propagator.

    ``forces`` holds per-grid expectations of the coupling operators
    (first, second and third order tables) needed for the work integral.
    """

    times: np.ndarray
    Phi: np.ndarray
    U_final: np.ndarray
    rho_final: np.ndarray
    j_mid: np.ndarray
    forces: tuple
    energy_initial: float
    energy_final: float
    steps: int
    states: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return (self.times[-1] - self.times[0]) / self.steps


def _step_unitary(K: np.ndarray, h: float) -> np.ndarray:
    w, V = np.linalg.eigh(K)
    return (V * np.exp(-1j * w * h)) @ V.conj().T


def _expect(rho: np.ndarray, A: np.ndarray) -> float:
    return float(np.real(np.einsum("ij,ji->", rho, A)))


def propagate(
    spec: SystemSpec,
    state: ThermalState,
    protocol: DriveProtocol,
    steps: int = DEFAULT_STEPS,
    tolerance: float | None = None,
    keep_states: bool = False,
) -> Trajectory:
    """Evolve the initial thermal state under ``H(j(t)) - mu N``.

    Each sub-step applies the exact exponential of the Hamiltonian sampled
    at the sub-step midpoint.  With ``tolerance`` set, the run is repeated at
    twice the resolution and :class:`StepTooCoarse` is raised if any
    expectation value moves by more than ``tolerance``.
    """
    steps = int(steps)
    if steps < 1:
        raise ValidationError("steps must be at least 1")
    if protocol.n_sources != spec.n_sources:
        raise DimensionMismatch("protocol and system have different source counts")
    if not np.allclose(protocol.j_initial, state.j, atol=1e-12, rtol=0):
        raise GridMismatch("initial protocol plateau differs from the thermal state's sources")
    traj = _propagate(spec, state, protocol, steps, keep_states)
    if tolerance is not None:
        fine = _propagate(spec, state, protocol, 2 * steps, False)
        shift = np.max(np.abs(fine.Phi[::2] - traj.Phi)) if traj.Phi.size else 0.0
        if shift > tolerance:
            raise StepTooCoarse(
                f"doubling the resolution moved expectation values by {shift:.3e} > {tolerance:.3e}"
            )
    return traj


def _propagate(spec, state, protocol, steps, keep_states) -> Trajectory:
    t = np.linspace(protocol.t_i, protocol.t_f, steps + 1)
    h = (protocol.t_f - protocol.t_i) / steps
    mids = protocol(t[:-1] + 0.5 * h)
    j_grid = protocol(t)
    muN = state.mu * spec.N_op
    rho = state.rho()
    d, M = spec.dim, spec.n_sources
    keys2, keys3 = list(spec._phi2), list(spec._phi3)
    ops2 = [spec._phi2[k] for k in keys2]
    ops3 = [spec._phi3[k] for k in keys3]
    Phi = np.empty((steps + 1, M))
    F1 = np.empty((steps + 1, M))
    F2 = np.empty((steps + 1, len(keys2)))
    F3 = np.empty((steps + 1, len(keys3)))
    E0 = np.empty(steps + 1)
    states = np.empty((steps + 1, d, d), complex) if keep_states else None
    U = np.eye(d, dtype=complex)

    def record(k, r):
        for m in range(M):
            Phi[k, m] = _expect(r, observable_at(spec, m, j_grid[k]))
            F1[k, m] = _expect(r, spec.phi[m])
        for a, op in enumerate(ops2):
            F2[k, a] = _expect(r, op)
        for a, op in enumerate(ops3):
            F3[k, a] = _expect(r, op)
        E0[k] = _expect(r, spec.H0 - muN)
        if keep_states:
            states[k] = r

    record(0, rho)
    cache: dict = {}
    for k in range(steps):
        key = mids[k].tobytes()
        u = cache.get(key)
        if u is None:
            u = _step_unitary(hamiltonian_at(spec, mids[k]) - muN, h)
            if len(cache) < 64:
                cache[key] = u
        U = u @ U
        rho = u @ rho @ u.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        record(k + 1, rho)
    drift = np.max(np.abs(U.conj().T @ U - np.eye(d)))
    if drift > UNITARITY_TOL:
        raise StepTooCoarse(f"propagator lost unitarity ({drift:.2e})")
    rho_i = state.rho()
    e_i = _expect(rho_i, hamiltonian_at(spec, protocol.j_initial) - muN)
    e_f = _expect(rho, hamiltonian_at(spec, protocol.j_final) - muN)
    return Trajectory(
        times=t,
        Phi=Phi,
        U_final=U,
        rho_final=rho,
        j_mid=mids,
        forces=(F1, F2, F3, E0, tuple(keys2), tuple(keys3)),
        energy_initial=e_i,
        energy_final=e_f,
        steps=steps,
        states=states,
    )


# --------------------------------------------------------------------------
# work


def _energy_from_tables(spec: SystemSpec, k: int, forces, j: np.ndarray) -> float:
    """``Tr{rho_k H(j)}`` rebuilt from the recorded coupling expectations."""
    F1, F2, F3, E0, keys2, keys3 = forces
    dj = spec._dj(j)
    e = E0[k] - F1[k] @ dj
    for a, (m, n) in enumerate(keys2):
        mult = 1 if m == n else 2
        e -= 0.5 * mult * dj[m] * dj[n] * F2[k, a]
    for a, key in enumerate(keys3):
        mult = len(set(itertools.permutations(key)))
        e -= mult / 6.0 * dj[key[0]] * dj[key[1]] * dj[key[2]] * F3[k, a]
    return e


def mean_work(trajectory: Trajectory, protocol: DriveProtocol, spec: SystemSpec) -> float:
    """Expected work as the power integral ``-sum_m int Phi_m dj_m``.

    The midpoint propagator holds the Hamiltonian fixed between grid points,
    so the source changes act at grid times.  The integral then splits into
    segments ``j(t_k - h/2) -> j(t_k + h/2)`` at fixed state, each integrated
    exactly (the integrand is polynomial in ``j``).
    """
    n = trajectory.steps
    jm = trajectory.j_mid
    left = np.vstack([protocol.j_initial[None, :], jm])
    right = np.vstack([jm, protocol.j_final[None, :]])
    total = 0.0
    for k in range(n + 1):
        if np.array_equal(left[k], right[k]):
            continue
        total += _energy_from_tables(spec, k, trajectory.forces, right[k])
        total -= _energy_from_tables(spec, k, trajectory.forces, left[k])
    return float(total)


def energy_difference(trajectory: Trajectory) -> float:
    """``Tr{rho_f (H_f - mu N)} - Tr{rho_i (H_i - mu N)}``."""
    return trajectory.energy_final - trajectory.energy_initial


# --------------------------------------------------------------------------
# Volterra series


@dataclass(frozen=True)
class VolterraKernels:
    """Response kernels of observable ``m`` about one thermal state."""

    m: int
    Phi_i: float
    linear: tuple
    quadratic: dict = field(default_factory=dict)
    beta: float = 1.0
    j_ref: tuple = ()

    @property
    def n_sources(self) -> int:
        return len(self.linear)


def volterra_kernels(state: ThermalState, spec: SystemSpec, m: int, order: int = 2) -> VolterraKernels:
    """Collect linear (and quadratic) kernels of observable ``m``."""
    if order not in (1, 2):
        raise ValidationError("Volterra order must be 1 or 2")
    M = spec.n_sources
    lin = tuple(linear_response(state, spec, m, n) for n in range(M))
    quad = {}
    if order == 2:
        quad = {(n, k): quadratic_response(state, spec, m, n, k) for n in range(M) for k in range(M)}
    return VolterraKernels(
        m, state.expect(spec.phi[m]), lin, quad, state.beta, tuple(float(x) for x in state.j)
    )


def _conv(omegas: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid values of ``int_0^t exp(-i w (t - s)) g(s) ds`` on the grid.

    Returns an array of shape ``(len(omegas), len(g))``.
    """
    out = np.empty((omegas.size, g.size), complex)
    g = np.asarray(g, dtype=complex)
    n = np.arange(g.size)
    for i, w in enumerate(omegas):
        a = np.exp(-1j * w * h)
        y = lfilter([0.5 * h, 0.5 * h * a], [1.0, -a], g)
        # remove the spurious half-weight of the first sample at t = 0
        out[i] = y - 0.5 * h * g[0] * a**n
    return out


def _delayed_linear(comb: SpectralComb, g: np.ndarray, h: float) -> np.ndarray:
    if len(comb) == 0 or not np.any(g):
        return np.zeros(g.size)
    I = _conv(comb.omegas, g, h)
    return np.real(1j * (comb.weights @ I)) / (2 * np.pi)


def _delayed_nested(comb: SpectralComb, g_early: np.ndarray, g_late: np.ndarray, h: float) -> np.ndarray:
    """Double integral over the sector where ``g_early`` acts first."""
    if len(comb) == 0 or not (np.any(g_early) and np.any(g_late)):
        return np.zeros(g_early.size)
    w1, w2 = comb.omegas[:, 0], comb.omegas[:, 1]
    total = np.zeros(g_early.size, complex)
    inner = _conv(w1 - w2, g_early, h)
    for l in range(len(comb)):
        outer = _conv(w1[l : l + 1], g_late * inner[l], h)[0]
        total += comb.weights[l] * outer
    return -np.real(total) / (2 * np.pi) ** 2


def volterra_predict(kernels: VolterraKernels, protocol: DriveProtocol, order: int, times) -> np.ndarray:
    """Volterra-series prediction of observable ``kernels.m`` on ``times``.

    ``times`` must be a uniform grid starting at the protocol's ``t_i``
    (typically ``Trajectory.times``).  Convolutions use the trapezoid rule;
    the causal edge enters with half weight.
    """
    if order not in (1, 2):
        raise ValidationError("Volterra order must be 1 or 2")
    if order == 2 and not kernels.quadratic:
        raise GridMismatch("second-order prediction needs quadratic kernels")
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise GridMismatch("prediction grid needs at least two samples")
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=0) or h <= 0:
        raise GridMismatch("prediction grid must be uniform and ascending")
    if abs(t[0] - protocol.t_i) > 1e-12 * max(1.0, abs(protocol.t_i)):
        raise GridMismatch("prediction grid must start at the protocol's t_i")
    if protocol.n_sources != kernels.n_sources:
        raise GridMismatch("kernels and protocol have different source counts")
    if not np.allclose(protocol.j_initial, kernels.j_ref, atol=1e-12, rtol=0):
        raise GridMismatch("kernels were computed for a different initial source vector")

    dj = protocol(t) - protocol.j_initial
    M = kernels.n_sources
    out = np.full(t.size, kernels.Phi_i)
    for n, K in enumerate(kernels.linear):
        g = dj[:, n]
        out += K.instantaneous * g + _delayed_linear(K.spectral, g, h)
    if order == 1:
        return out
    for n in range(M):
        for k in range(M):
            Q: QuadraticResponseKernel = kernels.quadratic[(n, k)]
            gn, gk = dj[:, n], dj[:, k]
            if not (np.any(gn) and np.any(gk)):
                continue
            out += 0.5 * Q.instantaneous * gn * gk
            out += gn * _delayed_linear(Q.mixed_n, gk, h)
            out += 0.5 * _delayed_linear(Q.coincident, gn * gk, h)
            out += _delayed_nested(Q.nested_nk, gn, gk, h)
    return out


def convergence_exponent(amplitudes: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(amplitude)``."""
    a, e = np.log(np.asarray(amplitudes, float)), np.log(np.asarray(errors, float))
    return float(np.polyfit(a, e, 1)[0])


__all__ = [
    "SourceDrive",
    "DriveProtocol",
    "Trajectory",
    "VolterraKernels",
    "constant_protocol",
    "propagate",
    "mean_work",
    "energy_difference",
    "volterra_kernels",
    "volterra_predict",
    "convergence_exponent",
]
