"""Frequency-domain tools and closed-form reference responses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import hyp2f1

from .errors import (
    EdgeLeakage,
    NonUniformGrid,
    OnRealAxis,
    OverdampedUnsupported,
    PoleHit,
    ValidationError,
)

GRID_RTOL = 1e-12
EDGE_FRACTION = 0.15
KK_BLOCK = 512
POLE_RTOL = 1e-14
# mostly-plus metric used to lower indices in the Ward contraction
METRIC = np.diag([-1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class FrequencyGrid:
    """Complex samples on a uniform real grid symmetric about zero."""

    omegas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if om.ndim != 1 or om.size < 3 or v.shape != om.shape:
            raise ValidationError("grid needs matching 1-d omegas and values, at least 3 points")
        d = np.diff(om)
        h = d.mean()
        if h <= 0 or np.max(np.abs(d - h)) > GRID_RTOL * max(1.0, np.max(np.abs(om))):
            raise NonUniformGrid("frequency grid must be uniform and ascending")
        if abs(om[0] + om[-1]) > GRID_RTOL * max(1.0, abs(om[0])):
            raise NonUniformGrid("frequency grid must be symmetric about zero")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "values", v)

    @classmethod
    def symmetric(cls, half_width: float, n: int, values=None) -> "FrequencyGrid":
        om = np.linspace(-half_width, half_width, n)
        v = np.zeros(n, complex) if values is None else values(om)
        return cls(om, v)

    @property
    def spacing(self) -> float:
        return float(self.omegas[1] - self.omegas[0])


def _pv_hilbert(omegas: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``PV int f(w') / (w' - w) dw'`` over the grid at every grid point.

    The integrand has its value at the singular point subtracted; the
    remaining smooth integrand is integrated by the trapezoid rule and the
    pole term is added analytically as ``f(w) ln((b - w)/(w - a))``.
    """
    n = omegas.size
    h = omegas[1] - omegas[0]
    a, b = omegas[0], omegas[-1]
    trap = np.full(n, h)
    trap[0] = trap[-1] = 0.5 * h
    fp = np.gradient(f, h)
    out = np.empty(n)
    for start in range(0, n, KK_BLOCK):
        idx = np.arange(start, min(start + KK_BLOCK, n))
        diff = omegas[None, :] - omegas[idx, None]
        num = f[None, :] - f[idx, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            q = num / diff
        q[np.arange(idx.size), idx] = fp[idx]
        out[idx] = q @ trap
    w = omegas
    with np.errstate(divide="ignore"):
        logterm = np.log((b - w) / (w - a))
    # at the end points the pole integral diverges; use the one-sided limit
    logterm[0] = logterm[1]
    logterm[-1] = logterm[-2]
    return out + f * logterm


TAIL_POWERS = (1, 2, 3, 4, 5)
TAIL_FRACTION = 0.2


def _tail_coefficients(x: np.ndarray, f: np.ndarray, side: int) -> np.ndarray:
    """Least-squares coefficients ``c_k`` of ``f ~ sum_k c_k (b/|x|)^k`` near one edge."""
    n = x.size
    m = max(len(TAIL_POWERS) + 1, int(TAIL_FRACTION * n))
    sel = slice(n - m, n) if side > 0 else slice(0, m)
    u = abs(x[-1]) / np.abs(x[sel])
    basis = np.column_stack([u**k for k in TAIL_POWERS])
    coef, *_ = np.linalg.lstsq(basis, f[sel], rcond=None)
    return coef


def _tail_correction(omegas: np.ndarray, f: np.ndarray) -> np.ndarray:
    """PV contribution of the region beyond the grid.

    Each tail is modelled as ``sum_k c_k (b/|x|)^k``, fitted on the outer
    fifth of the grid.  For one term ``int_b^inf (b/x)^k / (x - w) dx``
    equals ``2F1(1, k; k+1; w/b) / k``; the left tail is the mirror image.
    """
    b = omegas[-1]
    a = omegas[1:-1] / b
    out = np.zeros_like(omegas)
    cr = _tail_coefficients(omegas, f, +1)
    cl = _tail_coefficients(omegas, f, -1)
    for k, c_r, c_l in zip(TAIL_POWERS, cr, cl):
        out[1:-1] += c_r * hyp2f1(1.0, k, k + 1.0, a) / k
        out[1:-1] -= c_l * hyp2f1(1.0, k, k + 1.0, -a) / k
    return out


def _hilbert(omegas: np.ndarray, f: np.ndarray, tails: bool) -> np.ndarray:
    out = _pv_hilbert(omegas, f)
    if tails:
        out = out + _tail_correction(omegas, f)
        # the edge samples sit on the log singularity of the tail model
        out[0] = 2 * out[1] - out[2]
        out[-1] = 2 * out[-2] - out[-3]
    return out


def _leaks(v: np.ndarray) -> bool:
    peak = np.max(np.abs(v))
    return peak > 0 and max(abs(v[0]), abs(v[-1])) >= EDGE_FRACTION * peak


def kramers_kronig(grid: FrequencyGrid, tails: bool = True) -> FrequencyGrid:
    """Hilbert-transform partner of a causal response sampled on ``grid``.

    The real part is rebuilt from the imaginary part,
    ``Re(w) = (1/pi) PV int Im(w') / (w' - w) dw'``, and the imaginary part
    from the real part with the opposite sign.  With ``tails`` the region
    beyond the grid is modelled by inverse powers fitted to the outer fifth
    of each side.  A warning is emitted when a component has not decayed at
    the grid edges.
    """
    re, im = grid.values.real, grid.values.imag
    for name, comp in (("imaginary", im), ("real", re)):
        if _leaks(comp):
            warnings.warn(
                f"{name} part does not decay toward the grid edges; truncation error likely",
                EdgeLeakage,
                stacklevel=2,
            )
    new_re = _hilbert(grid.omegas, im, tails) / np.pi
    new_im = -_hilbert(grid.omegas, re, tails) / np.pi
    return FrequencyGrid(grid.omegas, new_re + 1j * new_im)


def relative_l2(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def spectral_reconstruct(comb, z) -> np.ndarray | complex:
    """``G(z) = -sum_l w_l / (2 pi (z - omega_l))`` for a two-point comb."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise OnRealAxis("spectral reconstruction needs Im z != 0")
    if comb.omegas.ndim != 1:
        raise ValidationError("spectral reconstruction needs a two-point comb")
    out = -(1.0 / (np.subtract.outer(z, comb.omegas))) @ comb.weights / (2 * np.pi)
    return complex(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# reference models


def _domain(times, omegas):
    if (times is None) == (omegas is None):
        raise ValidationError("give exactly one of times or omegas")


def rc_response(R: float, C: float, times=None, omegas=None) -> np.ndarray:
    """Charge response of a resistor and capacitor in series.

    Time domain ``theta(t) exp(-t / RC) / R``; frequency domain
    ``1 / (-i w R + 1/C)``.
    """
    if not (R > 0 and C > 0):
        raise ValidationError("R and C must be positive")
    _domain(times, omegas)
    if times is not None:
        t = np.asarray(times, dtype=float)
        return np.where(t >= 0, np.exp(-np.clip(t, 0, None) / (R * C)) / R, 0.0)
    w = np.asarray(omegas, dtype=float)
    return 1.0 / (-1j * w * R + 1.0 / C)


def rc_poles(R: float, C: float) -> np.ndarray:
    return np.array([-1j / (R * C)])


def _check_damping(zeta: float):
    if zeta < 0:
        raise ValidationError("damping ratio must be non-negative")
    if zeta >= 1:
        raise OverdampedUnsupported("only the underdamped branch (zeta < 1) is implemented")


def oscillator_response(omega0: float, zeta: float, times=None, omegas=None) -> np.ndarray:
    """Displacement response of a damped oscillator to a force pulse.

    ``x'' + 2 zeta omega0 x' + omega0^2 x = f``; time domain
    ``theta(t) exp(-zeta omega0 t) sin(omega_d t) / omega_d``.
    """
    if not omega0 > 0:
        raise ValidationError("omega0 must be positive")
    _check_damping(zeta)
    _domain(times, omegas)
    wd = np.sqrt(1.0 - zeta * zeta) * omega0
    if times is not None:
        t = np.asarray(times, dtype=float)
        tp = np.clip(t, 0, None)
        return np.where(t >= 0, np.exp(-zeta * omega0 * tp) * np.sin(wd * tp) / wd, 0.0)
    w = np.asarray(omegas, dtype=float)
    return 1.0 / (omega0**2 - w * w - 2j * zeta * omega0 * w)


def oscillator_poles(omega0: float, zeta: float) -> np.ndarray:
    """Poles ``(+-sqrt(1 - zeta^2) - i zeta) omega0``."""
    _check_damping(zeta)
    r = np.sqrt(1.0 - zeta * zeta)
    return np.array([complex(r * omega0, -zeta * omega0), complex(-r * omega0, -zeta * omega0)])


@dataclass(frozen=True)
class FluidParams:
    """Diffusive current response: conductivity, diffusion constant, relaxation time."""

    sigma: float
    D: float
    tau: float = 0.0

    def __post_init__(self):
        if min(self.sigma, self.D, self.tau) < 0:
            raise ValidationError("sigma, D and tau must be non-negative")

    @property
    def susceptibility(self) -> float:
        if not self.D > 0:
            raise ValidationError("static susceptibility needs D > 0")
        return self.sigma / self.D


def fluid_current_response(params: FluidParams, p0: complex, p_vec) -> np.ndarray:
    """Retarded current-current response ``G^{mu nu}(p)`` of a diffusive fluid.

    ``G^00 = i sigma p^2 / d``, ``G^0j = i sigma p0 p^j / d`` and
    ``G^jk = i sigma p0 delta^jk / (1 - i tau p0)
    + D sigma p0 p^j p^k / (d (1 - i tau p0))`` with
    ``d = p0 - i tau p0^2 + i D p^2``.
    """
    s, D, tau = params.sigma, params.D, params.tau
    p0 = complex(p0)
    p = np.asarray(p_vec, dtype=float)
    if p.shape != (3,):
        raise ValidationError("spatial momentum must have three components")
    p2 = float(p @ p)
    # d = i * e with e = D p^2 - tau p0^2 - i p0
    q = tau * p0 * p0 + 1j * p0
    e = D * p2 - q
    relax = 1.0 - 1j * tau * p0
    scale = max(1.0, abs(p0), abs(tau * p0 * p0), D * p2)
    if abs(e) <= POLE_RTOL * scale or abs(relax) <= POLE_RTOL * max(1.0, abs(tau * p0)):
        raise PoleHit("requested momentum sits on a pole of the response")
    G = np.zeros((4, 4), complex)
    # written as sigma / (D - q/p^2) so the static limit is exactly sigma/D
    g00 = s / (D - q / p2) if p2 > 0 else s * p2 / e
    G[0, 0] = g00
    G[0, 1:] = G[1:, 0] = s * p0 * p / e
    G[1:, 1:] = (1j * s * p0 / relax) * np.eye(3) - 1j * D * s * p0 * np.outer(p, p) / (e * relax)
    return G


def ward_residual(params: FluidParams, p0: complex, p_vec) -> float:
    """Largest relative Ward contraction ``p_mu G^{mu nu}`` or ``G^{mu nu} p_nu``."""
    G = fluid_current_response(params, p0, p_vec)
    pu = np.concatenate([[complex(p0)], np.asarray(p_vec, float)])
    pl = METRIC @ pu
    left = pl @ G
    right = G @ pl
    scale = np.max(np.abs(G)) * np.max(np.abs(pl))
    if scale == 0:
        return 0.0
    return float(max(np.max(np.abs(left)), np.max(np.abs(right))) / scale)


def fluid_poles(params: FluidParams, p_vec) -> np.ndarray:
    """Roots in ``p0`` of ``p0 - i tau p0^2 + i D p^2`` and of ``1 - i tau p0``."""
    p = np.asarray(p_vec, dtype=float)
    p2 = float(p @ p)
    tau, D = params.tau, params.D
    if tau == 0:
        return np.array([-1j * D * p2])
    disc = np.sqrt(complex(-1.0 + 4.0 * tau * D * p2))
    roots = [(-1j + disc) / (2 * tau), (-1j - disc) / (2 * tau), -1j / tau]
    return np.array(roots)


__all__ = [
    "FrequencyGrid",
    "FluidParams",
    "kramers_kronig",
    "relative_l2",
    "spectral_reconstruct",
    "rc_response",
    "rc_poles",
    "oscillator_response",
    "oscillator_poles",
    "fluid_current_response",
    "fluid_poles",
    "ward_residual",
]
