import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm, fractional_matrix_power, logm

from qresponse.errors import (
    DimensionMismatch,
    DomainError,
    NegativeWeight,
    NonHermitianInput,
    UnknownFunctionTag,
)
from qresponse.linalg import (
    BKM,
    CONST1,
    LINEAR,
    ROOT_MEAN,
    SYMMETRIC,
    apply_Kf,
    check_hermitian,
    eig_hermitian,
    matrix_function,
    monotone_function,
    power,
    whitelist,
)
from tests.conftest import random_hermitian


def density(rng, d, beta=1.0):
    H = random_hermitian(rng, d)
    R = expm(-beta * H)
    return R / np.trace(R).real


def test_eigh_contract(rng):
    A = random_hermitian(rng, 6)
    es = eig_hermitian(A)
    assert np.all(np.diff(es.eigenvalues) >= 0)
    assert np.allclose(es.vectors.conj().T @ es.vectors, np.eye(6), atol=1e-12)
    assert np.allclose(es.reconstruct(), A, atol=1e-12)


def test_rejects_non_hermitian_and_bad_shapes():
    with pytest.raises(NonHermitianInput):
        eig_hermitian([[0, 1], [0, 0]])
    with pytest.raises(DimensionMismatch):
        eig_hermitian(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        eig_hermitian([[np.nan, 0], [0, 1]])


def test_check_hermitian_symmetrizes_roundoff():
    A = np.array([[1.0, 2.0 + 1e-15], [2.0, 3.0]])
    B = check_hermitian(A)
    assert np.array_equal(B, B.conj().T)


def test_matrix_function_matches_expm(rng):
    A = random_hermitian(rng, 5)
    assert np.allclose(matrix_function(A, np.exp), expm(A), atol=1e-12)


def test_matrix_function_domain_error():
    with pytest.raises(DomainError):
        matrix_function(np.diag([-1.0, 1.0]), np.log)


@pytest.mark.parametrize(
    "f, oracle",
    [
        (CONST1, lambda R, B: B @ R),
        (LINEAR, lambda R, B: R @ B),
        (SYMMETRIC, lambda R, B: 0.5 * (R @ B + B @ R)),
        (ROOT_MEAN, lambda R, B: 0.25 * (R @ B + B @ R) + 0.5 * fractional_matrix_power(R, 0.5) @ B @ fractional_matrix_power(R, 0.5)),
    ],
    ids=lambda x: getattr(x, "name", ""),
)
def test_kf_closed_forms(rng, f, oracle):
    R = density(rng, 4)
    B = random_hermitian(rng, 4)
    out = apply_Kf(eig_hermitian(R), B, f)
    assert np.allclose(out, oracle(R, B), atol=1e-13)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 0.5, 1.0])
def test_kf_power(rng, gamma):
    R = density(rng, 4)
    B = random_hermitian(rng, 4)
    expected = fractional_matrix_power(R, gamma) @ B @ fractional_matrix_power(R, 1 - gamma)
    assert np.allclose(apply_Kf(eig_hermitian(R), B, power(gamma)), expected, atol=1e-12)


def test_kf_bkm_matches_integral(rng):
    R = density(rng, 3)
    B = random_hermitian(rng, 3)
    L = logm(R)

    def entry(s, j, k, part):
        v = (expm(s * L) @ B @ expm((1 - s) * L))[j, k]
        return v.real if part == 0 else v.imag

    expected = np.array(
        [[quad(entry, 0, 1, args=(j, k, 0), epsabs=1e-14)[0] + 1j * quad(entry, 0, 1, args=(j, k, 1), epsabs=1e-14)[0]
          for k in range(3)] for j in range(3)]
    )
    assert np.allclose(apply_Kf(eig_hermitian(R), B, BKM), expected, atol=1e-11)


def test_kf_degenerate_and_rank_deficient():
    R = np.diag([0.5, 0.5, 0.0])
    B = np.ones((3, 3))
    out = apply_Kf(eig_hermitian(R), B, BKM)
    # equal weights give f(1) p = p; a zero weight against a positive one gives the log-mean limit 0
    expected = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])
    assert np.allclose(out, expected, atol=1e-15)
    sym = apply_Kf(eig_hermitian(R), B, SYMMETRIC)
    assert np.allclose(sym[0, 2], 0.25)


def test_kf_rejects_negative_weight():
    with pytest.raises(NegativeWeight):
        apply_Kf(eig_hermitian(np.diag([1.2, -0.2])), np.eye(2), BKM)


@given(st.floats(0.05, 5.0), st.sampled_from([f.name for f in whitelist(0.3)]))
def test_function_normalized_and_dual(z, name):
    f = monotone_function(name)
    assert np.isclose(f(1.0), 1.0)
    # z f(1/z) is the dual
    assert np.isclose(f.dual()(z), z * f(1.0 / z), rtol=1e-12)


@given(st.floats(-40.0, 40.0).filter(lambda x: abs(x) > 1e-6), st.sampled_from([f.name for f in whitelist(0.7)]))
def test_fdr_coefficient_no_overflow(x, name):
    f = monotone_function(name)
    c = f.fdr_coefficient(x)
    assert np.isfinite(c)
    if abs(x) < 30:
        assert np.isclose(c, f(np.exp(-x)) / (1 - np.exp(-x)), rtol=1e-9)


def test_kf_hermiticity_preserving_for_symmetric_functions(rng):
    R = density(rng, 5)
    B = random_hermitian(rng, 5)
    for f in (SYMMETRIC, BKM, ROOT_MEAN, power(0.5)):
        out = apply_Kf(eig_hermitian(R), B, f)
        assert np.allclose(out, out.conj().T, atol=1e-14)


def test_function_tag_parsing():
    assert monotone_function("power(0.25)") == power(0.25)
    assert monotone_function("kubo-mori") == BKM
    with pytest.raises(UnknownFunctionTag):
        monotone_function("cubic")
    with pytest.raises(UnknownFunctionTag):
        power(1.5)
