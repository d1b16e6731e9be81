import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad
from scipy.linalg import expm, logm

from qresponse.errors import MissingCouplingTable, NonCommutingNumber, ValidationError
from qresponse.model import SZ, SourceCoupling, SystemSpec, build_qubit, build_transverse_ising
from qresponse.thermal import (
    bkm_inner,
    bkm_three,
    chi_S_N,
    chi_T_mu,
    exp_divdiff2,
    gibbs,
    solve_fixed_SN,
    suzuki_limit,
    thermo_jacobian,
    thermo_point,
)
from tests.conftest import random_hermitian
from tests.test_acceptance import legendre_system


def small_spec(seed=1, d=3):
    rng = np.random.default_rng(seed)
    return SystemSpec(random_hermitian(rng, d), None, [random_hermitian(rng, d) for _ in range(3)])


def test_gibbs_matches_expm():
    spec = small_spec()
    s = gibbs(spec, 0.7)
    R = expm(-0.7 * spec.H0)
    assert np.isclose(s.logZ, np.log(np.trace(R).real), rtol=1e-13)
    assert np.allclose(s.rho(), R / np.trace(R), atol=1e-14)


def test_gibbs_large_beta_no_overflow():
    s = gibbs(build_qubit(1.0), 1e4)
    assert np.isfinite(s.logZ)
    assert np.isclose(s.weights[0], 1.0)


def test_gibbs_rejects_bad_input():
    with pytest.raises(ValidationError):
        gibbs(build_qubit(1.0), 0.0)
    spec = build_qubit(1.0)
    # the transverse source breaks number conservation once switched on
    with pytest.raises(NonCommutingNumber):
        gibbs(spec, 1.0, 0.0, [0.3])


def test_bkm_inner_matches_integral():
    spec = small_spec()
    s = gibbs(spec, 0.9)
    R = s.rho()
    L = logm(R)
    A, B = spec.phi[0], spec.phi[1]

    def integrand(lam):
        return np.trace(A @ expm((1 - lam) * L) @ B @ expm(lam * L)).real

    assert np.isclose(bkm_inner(s, A, B), quad(integrand, 0, 1, epsabs=1e-14)[0], rtol=1e-11)


def test_bkm_three_matches_simplex_integral():
    spec = small_spec(d=3)
    s = gibbs(spec, 0.8)
    L = logm(s.rho())
    A, B, C = spec.phi

    def integrand(l2, l1):
        l3 = 1 - l1 - l2
        Ra, Rb, Rc = expm(l1 * L), expm(l2 * L), expm(l3 * L)
        return np.trace(A @ Ra @ B @ Rb @ C @ Rc + A @ Ra @ C @ Rb @ B @ Rc).real

    ref = dblquad(integrand, 0, 1, 0, lambda l1: 1 - l1, epsabs=1e-12)[0]
    assert np.isclose(bkm_three(s, A, B, C), ref, rtol=1e-9)


@given(
    st.floats(-30, 5),
    st.floats(1e-9, 1e-3) | st.floats(-1e-3, -1e-9),
    st.floats(-3, 3).filter(lambda v: abs(v) > 1e-6),
)
def test_exp_divdiff_matches_high_precision(x, dy, dz):
    y, z = x + dy, x + dz
    assume(len({x, y, z}) == 3)
    with mpmath.workdps(80):
        a, b, c = mpmath.mpf(x), mpmath.mpf(y), mpmath.mpf(z)
        ref = (
            mpmath.exp(a) / ((a - b) * (a - c))
            + mpmath.exp(b) / ((b - a) * (b - c))
            + mpmath.exp(c) / ((c - a) * (c - b))
        )
    assert np.isclose(exp_divdiff2(x, y, z), float(ref), rtol=1e-10, atol=0)


def test_exp_divdiff_coincident_points():
    assert np.isclose(exp_divdiff2(0.3, 0.3, 0.3), 0.5 * np.exp(0.3), rtol=1e-15)


def test_chi_T_matches_lnZ_hessian():
    spec = legendre_system()
    beta, mu, h = 0.8, 0.2, 1e-3
    E = np.eye(3)
    j0 = spec.j_init

    def Phi(j):
        return thermo_point(gibbs(spec, beta, mu, j), spec).Phi

    fd = np.array([(Phi(j0 + h * E[n]) - Phi(j0 - h * E[n])) / (2 * h) for n in range(3)]).T
    c2 = chi_T_mu(spec, beta, mu)
    assert np.max(np.abs(fd - c2)) / np.max(np.abs(c2)) < 1e-5
    fd3 = np.zeros((3, 3, 3))
    for n in range(3):
        for k in range(3):
            fd3[:, n, k] = (
                Phi(j0 + h * E[n] + h * E[k]) - Phi(j0 + h * E[n] - h * E[k])
                - Phi(j0 - h * E[n] + h * E[k]) + Phi(j0 - h * E[n] - h * E[k])
            ) / (4 * h * h)
    c3 = chi_T_mu(spec, beta, mu, order=3)
    assert np.max(np.abs(fd3 - c3)) / np.max(np.abs(c3)) < 1e-4


def test_chi_S_N_third_order_matches_legendre():
    spec = legendre_system()
    beta, mu, h = 0.8, 0.2, 2e-3
    E = np.eye(3)
    j0 = spec.j_init
    ref = thermo_point(gibbs(spec, beta, mu), spec)

    def Phi(j):
        return thermo_point(solve_fixed_SN(spec, ref.S, ref.N_val, j, beta, mu), spec).Phi

    fd3 = np.zeros((3, 3, 3))
    for n in range(3):
        for k in range(3):
            fd3[:, n, k] = (
                Phi(j0 + h * E[n] + h * E[k]) - Phi(j0 + h * E[n] - h * E[k])
                - Phi(j0 - h * E[n] + h * E[k]) + Phi(j0 - h * E[n] - h * E[k])
            ) / (4 * h * h)
    c3 = chi_S_N(spec, beta, mu, order=3)
    assert np.max(np.abs(fd3 - c3)) / np.max(np.abs(c3)) < 1e-4


def test_thermo_jacobian_matches_finite_differences():
    spec = legendre_system()
    beta, mu, h = 0.8, 0.2, 1e-5
    T = 1 / beta
    jb = thermo_jacobian(spec, beta, mu)

    def Y(T_, mu_):
        p = thermo_point(gibbs(spec, 1 / T_, mu_), spec)
        return np.array([p.S, p.N_val]), p.Phi

    (yT1, pT1), (yT0, pT0) = Y(T + h, mu), Y(T - h, mu)
    (ym1, pm1), (ym0, pm0) = Y(T, mu + h), Y(T, mu - h)
    assert np.allclose(jb.jac[0], (yT1 - yT0) / (2 * h), rtol=1e-7)
    assert np.allclose(jb.jac[1], (ym1 - ym0) / (2 * h), rtol=1e-7)
    assert np.allclose(jb.dPhi_dT, (pT1 - pT0) / (2 * h), atol=1e-8)
    assert np.allclose(jb.dPhi_dmu, (pm1 - pm0) / (2 * h), atol=1e-8)


def test_fixed_SN_solver_roundtrip():
    spec = legendre_system()
    ref = thermo_point(gibbs(spec, 0.8, 0.2), spec)
    s = solve_fixed_SN(spec, ref.S, ref.N_val, spec.j_init + 0.05, 1.0, 0.0)
    p = thermo_point(s, spec)
    assert np.isclose(p.S, ref.S, atol=1e-12) and np.isclose(p.N_val, ref.N_val, atol=1e-12)


def test_suzuki_routes_agree_when_diagonal_part_is_conserved():
    spec = build_qubit(1.0, tilt=0.6)
    for beta in (0.3, 1.0, 2.5):
        closed = suzuki_limit(spec, beta)
        assert np.allclose(closed, suzuki_limit(spec, beta, method="cesaro"), atol=1e-12)
        assert np.allclose(chi_T_mu(spec, beta) - chi_S_N(spec, beta), closed, atol=1e-12)
        assert closed[0, 0] > 0


def test_suzuki_routes_can_differ_on_finite_chain():
    spec = build_transverse_ising(3, 1.0, 0.5)
    closed = suzuki_limit(spec, 1.0)
    cesaro = suzuki_limit(spec, 1.0, method="cesaro")
    # the long-time average also projects on the extra conserved parity sectors
    assert np.all(np.linalg.eigvalsh(cesaro - closed) > -1e-12)


def test_strict_tables():
    with pytest.raises(MissingCouplingTable):
        chi_T_mu(build_qubit(1.0), 1.0, strict_tables=True)
    with pytest.raises(ValidationError):
        chi_T_mu(build_qubit(1.0), 1.0, order=4)


def test_chi_psd_for_linear_couplings(rng):
    spec = build_transverse_ising(3, 1.0, 0.7)
    chi = chi_T_mu(spec, 1.3)
    assert np.all(np.linalg.eigvalsh(chi) > -1e-12)
    assert np.all(np.linalg.eigvalsh(chi_S_N(spec, 1.3)) > -1e-12)


def test_number_conserving_occupation():
    spec = SystemSpec(SZ, 0.5 * (np.eye(2) + SZ), [SourceCoupling(SZ)])
    # K = H - mu N has levels -1 (empty) and 1 - mu (occupied)
    p_up = 1 / (1 + np.exp(2 - 0.3))
    assert np.isclose(thermo_point(gibbs(spec, 1.0, 0.3), spec).N_val, p_up, rtol=1e-13)


def test_two_level_number_locked_source():
    # phi = sigma_z is a function of N, so fixing N freezes it completely
    spec = SystemSpec(0.5 * SZ, 0.5 * (np.eye(2) + SZ), [SZ])
    beta, mu = 1.0, 0.2
    chiT = chi_T_mu(spec, beta, mu)
    assert abs(chi_S_N(spec, beta, mu)[0, 0]) < 1e-14
    assert np.allclose(suzuki_limit(spec, beta, mu), chiT, atol=1e-14)
    assert np.allclose(suzuki_limit(spec, beta, mu, method="cesaro"), chiT, atol=1e-14)
    assert np.isclose(chiT[0, 0], 1 / np.cosh((1 - mu) * beta / 2) ** 2, rtol=1e-13)
