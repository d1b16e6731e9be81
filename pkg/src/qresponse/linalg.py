"""Dense Hermitian linear algebra and the f-weighted superoperator.

All heavy lifting is done by LAPACK through ``numpy.linalg.eigh``; this module
adds validation, matrix functions on the spectrum and the superoperator
``K^f_rho`` for a fixed whitelist of operator monotone functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    DomainError,
    NegativeWeight,
    NonHermitianInput,
    UnknownFunctionTag,
)

HERMITIAN_RTOL = 1e-12
RECONSTRUCTION_RTOL = 1e-10
UNITARITY_ATOL = 1e-10
# |ln(p_j/p_k)| below which the log-mean kernel switches to its Taylor series
LOGMEAN_SERIES_CUTOFF = 1e-4
DEGENERATE_RTOL = 1e-14


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Return ``A`` as a finite square complex array."""
    M = np.asarray(A, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError(f"{name} has non-finite entries")
    return M


def check_hermitian(A, name: str = "operator", rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate hermiticity and return the exactly hermitian part of ``A``.

    Raises
    ------
    NonHermitianInput
        If ``max|A - A^dagger| > rtol * max|A|``.
    """
    M = as_matrix(A, name)
    scale = np.max(np.abs(M)) if M.size else 0.0
    dev = np.max(np.abs(M - M.conj().T)) if M.size else 0.0
    if dev > rtol * scale:
        raise NonHermitianInput(
            f"{name} is not hermitian: deviation {dev:.3e} vs scale {scale:.3e}"
        )
    return 0.5 * (M + M.conj().T)


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (ascending) and column eigenvectors of a Hermitian matrix."""

    eigenvalues: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def to_eigenbasis(self, A: np.ndarray) -> np.ndarray:
        """Matrix elements ``<j|A|k>`` in the eigenbasis."""
        U = self.vectors
        return U.conj().T @ A @ U

    def from_eigenbasis(self, A: np.ndarray) -> np.ndarray:
        U = self.vectors
        return U @ A @ U.conj().T

    def reconstruct(self) -> np.ndarray:
        return self.from_eigenbasis(np.diag(self.eigenvalues.astype(complex)))


def eig_hermitian(A, check: bool = True) -> EigenSystem:
    """Diagonalize a Hermitian matrix.

    Parameters
    ----------
    A : array_like
        Square Hermitian matrix.
    check : bool
        Verify the unitarity and reconstruction contract after the solve.

    Returns
    -------
    EigenSystem
        Ascending eigenvalues and unitary eigenvector matrix.
    """
    M = check_hermitian(A)
    try:
        w, U = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    es = EigenSystem(np.asarray(w, dtype=float), U)
    if check and M.size:
        scale = max(np.max(np.abs(M)), 1.0)
        unit = np.max(np.abs(U.conj().T @ U - np.eye(M.shape[0])))
        rec = np.max(np.abs(es.reconstruct() - M))
        if unit > UNITARITY_ATOL or rec > RECONSTRUCTION_RTOL * scale:
            raise ConvergenceFailure(
                f"eigendecomposition inaccurate: unitarity {unit:.2e}, residual {rec:.2e}"
            )
    return es


def matrix_function(A, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum.

    ``A`` may be a matrix or a precomputed :class:`EigenSystem`.  The result is
    ``U diag(f(lambda)) U^dagger``.

    Raises
    ------
    DomainError
        If ``f`` returns a non-finite value on the spectrum.
    """
    es = A if isinstance(A, EigenSystem) else eig_hermitian(A)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(es.eigenvalues))
    if fw.shape != es.eigenvalues.shape or not np.all(np.isfinite(fw)):
        raise DomainError("function undefined on part of the spectrum")
    return es.from_eigenbasis(np.diag(fw.astype(complex)))


# --------------------------------------------------------------------------
# operator monotone whitelist

_TAGS = ("CONST1", "LINEAR", "SYMMETRIC", "POWER", "BKM", "ROOT_MEAN")


def _logmean_factor(y: np.ndarray) -> np.ndarray:
    """(1 - e^{-y}) / y for y >= 0, with the series near zero."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) < LOGMEAN_SERIES_CUTOFF
    ys = y[small]
    out[small] = 1.0 - ys / 2.0 + ys * ys / 6.0 - ys**3 / 24.0
    yl = y[~small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~small] = np.where(np.isinf(yl), 0.0, -np.expm1(-yl) / yl)
    return out


@dataclass(frozen=True)
class MonotoneFunction:
    """One of the whitelisted operator monotone functions f with f(1) = 1.

    Tags: ``CONST1`` (1), ``LINEAR`` (z), ``SYMMETRIC`` ((1+z)/2),
    ``POWER`` (z**gamma, 0 <= gamma <= 1), ``BKM`` ((z-1)/ln z) and
    ``ROOT_MEAN`` ((sqrt(z)+1)**2/4).
    """

    tag: str
    gamma: float | None = None

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise UnknownFunctionTag(f"unknown function tag {self.tag!r}")
        if self.tag == "POWER":
            if self.gamma is None or not (0.0 <= float(self.gamma) <= 1.0):
                raise UnknownFunctionTag("POWER requires 0 <= gamma <= 1")
        elif self.gamma is not None:
            raise UnknownFunctionTag(f"{self.tag} takes no parameter")

    @property
    def name(self) -> str:
        if self.tag == "POWER":
            return f"POWER({self.gamma:g})"
        return self.tag

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.tag == "CONST1":
                return np.ones_like(z)
            if self.tag == "LINEAR":
                return z.copy()
            if self.tag == "SYMMETRIC":
                return (1.0 + z) / 2.0
            if self.tag == "POWER":
                return np.power(z, self.gamma)
            if self.tag == "BKM":
                lz = np.log(z)
                out = np.where(np.abs(lz) < LOGMEAN_SERIES_CUTOFF, 1.0, (z - 1.0) / lz)
                return np.where(z == 0.0, 0.0, out)
            return (np.sqrt(z) + 1.0) ** 2 / 4.0

    def dual(self) -> "MonotoneFunction":
        """The transpose function z f(1/z)."""
        if self.tag == "CONST1":
            return MonotoneFunction("LINEAR")
        if self.tag == "LINEAR":
            return MonotoneFunction("CONST1")
        if self.tag == "POWER":
            return MonotoneFunction("POWER", 1.0 - float(self.gamma))
        return self

    def of_exp(self, y) -> np.ndarray:
        """f(e^{-y}) for y >= 0 (y may be +inf), evaluated without overflow."""
        y = np.asarray(y, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            if self.tag == "CONST1":
                return np.ones_like(y)
            if self.tag == "LINEAR":
                return np.exp(-y)
            if self.tag == "SYMMETRIC":
                return (1.0 + np.exp(-y)) / 2.0
            if self.tag == "POWER":
                if self.gamma == 0.0:
                    return np.ones_like(y)
                return np.exp(-self.gamma * y)
            if self.tag == "BKM":
                return _logmean_factor(y)
            return (np.exp(-y / 2.0) + 1.0) ** 2 / 4.0

    def fdr_coefficient(self, x) -> np.ndarray:
        """f(e^{-x}) / (1 - e^{-x}) with x = beta * omega (undefined at x = 0)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            pos = self.of_exp(np.abs(x)) / (-np.expm1(-np.abs(x)))
            # for x < 0 use f(e^{-x}) = e^{-x} fdual(e^{x})
            neg = self.dual().of_exp(np.abs(x)) / np.expm1(-np.abs(x))
        return np.where(x >= 0, pos, neg)


CONST1 = MonotoneFunction("CONST1")
LINEAR = MonotoneFunction("LINEAR")
SYMMETRIC = MonotoneFunction("SYMMETRIC")
BKM = MonotoneFunction("BKM")
ROOT_MEAN = MonotoneFunction("ROOT_MEAN")


def power(gamma: float) -> MonotoneFunction:
    return MonotoneFunction("POWER", float(gamma))


def monotone_function(spec) -> MonotoneFunction:
    """Parse a tag such as ``"bkm"``, ``"POWER(0.3)"`` or ``"power:0.5"``."""
    if isinstance(spec, MonotoneFunction):
        return spec
    text = str(spec).strip().upper().replace("-", "_")
    m = re.fullmatch(r"POWER\s*[(:]\s*([0-9.eE+-]+)\s*\)?", text)
    if m:
        return power(float(m.group(1)))
    aliases = {"ROOTMEAN": "ROOT_MEAN", "WIGHTMAN": "CONST1", "KUBO_MORI": "BKM"}
    return MonotoneFunction(aliases.get(text, text))


def whitelist(gamma: float = 0.5) -> list[MonotoneFunction]:
    """All shipped functions, with POWER at the given exponent."""
    return [CONST1, LINEAR, SYMMETRIC, power(gamma), BKM, ROOT_MEAN]


def kf_kernel(f: MonotoneFunction, log_a, log_b, diff=None) -> np.ndarray:
    """Perspective ``f(p_a/p_b) p_b`` from log weights (``-inf`` allowed).

    ``diff`` optionally supplies ``log_a - log_b`` computed more accurately by
    the caller (e.g. from energy differences).  When ``p_a > p_b`` the dual
    form ``fdual(p_b/p_a) p_a`` is used so that nothing overflows, and zero
    weights follow the limit conventions of each whitelisted function.
    """
    la = np.asarray(log_a, dtype=float)
    lb = np.asarray(log_b, dtype=float)
    with np.errstate(invalid="ignore"):
        d = la - lb if diff is None else np.asarray(diff, dtype=float)
        d = np.broadcast_to(d, np.broadcast(la, lb).shape)
        below = np.where(d <= 0, -d, 0.0)
        above = np.where(d > 0, d, 0.0)
        lo = np.exp(lb) * f.of_exp(np.nan_to_num(below, nan=0.0, posinf=np.inf))
        hi = np.exp(la) * f.dual().of_exp(np.nan_to_num(above, nan=0.0, posinf=np.inf))
    out = np.where(d > 0, hi, lo)
    both_zero = np.isneginf(la) & np.isneginf(lb)
    return np.where(both_zero, 0.0, out)


def _safe_log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -np.inf)


def apply_Kf(rho: EigenSystem, B, f) -> np.ndarray:
    """Apply the superoperator ``K^f_rho`` to ``B``.

    In the eigenbasis of ``rho``, ``<j|K(B)|k> = <j|B|k> f(p_j/p_k) p_k``.

    Parameters
    ----------
    rho : EigenSystem
        Spectral decomposition of a density matrix.
    B : array_like
        Operator to transform.
    f : MonotoneFunction or str
        Whitelisted function tag.
    """
    f = monotone_function(f)
    p = np.asarray(rho.eigenvalues, dtype=float)
    scale = max(np.max(np.abs(p)), 1.0)
    if np.any(p < -1e-14 * scale):
        raise NegativeWeight("density matrix has negative eigenvalues")
    p = np.clip(p, 0.0, None)
    Bm = as_matrix(B, "B")
    if Bm.shape[0] != p.shape[0]:
        raise DimensionMismatch("operator and density matrix dimensions differ")
    lp = _safe_log(p)
    # snap near-equal weights so the degenerate convention f(1) p_k applies
    close = np.isclose(p[:, None], p[None, :], rtol=DEGENERATE_RTOL, atol=0.0)
    with np.errstate(invalid="ignore"):
        diff = np.where(close, 0.0, lp[:, None] - lp[None, :])
    K = kf_kernel(f, lp[:, None], lp[None, :], diff=np.where(np.isnan(diff), 0.0, diff))
    K = np.where(np.isneginf(lp[:, None]) & np.isneginf(lp[None, :]), 0.0, K)
    return rho.from_eigenbasis(rho.to_eigenbasis(Bm) * K)
