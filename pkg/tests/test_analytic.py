import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from qresponse import analytic as A
from qresponse import correlators as C
from qresponse.errors import EdgeLeakage, NonUniformGrid, OnRealAxis, OverdampedUnsupported, PoleHit, ValidationError
from qresponse.model import build_qubit
from qresponse.thermal import gibbs


def fourier(g, w, t_max):
    re = quad(lambda t: g(t) * np.cos(w * t), 0, t_max, limit=400)[0]
    im = quad(lambda t: g(t) * np.sin(w * t), 0, t_max, limit=400)[0]
    return re + 1j * im


@pytest.mark.parametrize("w", [0.0, 0.4, -1.3, 3.0])
def test_rc_time_and_frequency_agree(w):
    R, Cap = 2.0, 0.7
    val = fourier(lambda t: A.rc_response(R, Cap, times=t), w, 60.0)
    assert np.isclose(val, A.rc_response(R, Cap, omegas=w), atol=1e-9)


@pytest.mark.parametrize("w", [0.0, 0.8, -1.6])
def test_oscillator_time_and_frequency_agree(w):
    w0, z = 1.3, 0.25
    val = fourier(lambda t: A.oscillator_response(w0, z, times=t), w, 80.0)
    assert np.isclose(val, A.oscillator_response(w0, z, omegas=w), atol=1e-8)


@given(st.floats(0.1, 10.0), st.floats(0.0, 0.99))
def test_oscillator_poles_are_zeros_of_denominator(w0, z):
    for p in A.oscillator_poles(w0, z):
        assert abs(w0**2 - p * p - 2j * z * w0 * p) < 1e-12 * max(1.0, w0**2)
        assert p.imag <= 0


def test_reference_model_validation():
    assert np.allclose(A.rc_poles(2.0, 0.5), [-1j])
    with pytest.raises(OverdampedUnsupported):
        A.oscillator_poles(1.0, 1.0)
    with pytest.raises(ValidationError):
        A.rc_response(-1.0, 1.0, omegas=0.0)
    with pytest.raises(ValidationError):
        A.rc_response(1.0, 1.0)


def lorentz_grid(w0, g, n=4096, widths=20.0):
    om = np.linspace(-(abs(w0) + widths * g), abs(w0) + widths * g, n)
    return A.FrequencyGrid(om, 1.0 / (w0 - om - 1j * g))


@pytest.mark.parametrize("w0, g", [(0.0, 1.0), (0.5, 1.0), (2.0, 0.5)])
def test_kramers_kronig_lorentzian(w0, g):
    grid = lorentz_grid(w0, g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EdgeLeakage)
        out = A.kramers_kronig(grid)
    assert A.relative_l2(out.values.real, grid.values.real) < 1e-3
    assert A.relative_l2(out.values.imag, grid.values.imag) < 1e-3


def test_kramers_kronig_oscillator():
    om = np.linspace(-30.0, 30.0, 4097)
    grid = A.FrequencyGrid(om, A.oscillator_response(1.3, 0.3, omegas=om))
    out = A.kramers_kronig(grid)
    assert A.relative_l2(out.values, grid.values) < 1e-3


def test_tail_model_improves_truncation():
    grid = lorentz_grid(0.5, 1.0, widths=10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EdgeLeakage)
        plain = A.kramers_kronig(grid, tails=False)
        fitted = A.kramers_kronig(grid, tails=True)
    assert A.relative_l2(fitted.values, grid.values) < A.relative_l2(plain.values, grid.values)


def test_edge_leakage_warning():
    om = np.linspace(-2.0, 2.0, 257)
    with pytest.warns(EdgeLeakage):
        A.kramers_kronig(A.FrequencyGrid(om, 1.0 / (0.0 - om - 1j)))


def test_grid_validation():
    with pytest.raises(NonUniformGrid):
        A.FrequencyGrid(np.array([-1.0, 0.0, 0.5, 1.0]), np.zeros(4))
    with pytest.raises(NonUniformGrid):
        A.FrequencyGrid(np.linspace(0.0, 1.0, 5), np.zeros(5))
    g = A.FrequencyGrid.symmetric(3.0, 7)
    assert np.isclose(g.spacing, 1.0)


def test_spectral_reconstruction_matches_laplace_transform():
    w0, beta, eps = 1.0, 0.8, 0.05
    spec = build_qubit(w0)
    s = gibbs(spec, beta)
    K = C.linear_response(s, spec, 0, 0)
    for w in (0.3, 1.0, 2.2):
        ref = fourier(lambda t: K.delayed(t) * np.exp(-eps * t), w, 400.0)
        assert np.isclose(K.frequency(w, eps=eps), ref, atol=1e-7)
    with pytest.raises(OnRealAxis):
        A.spectral_reconstruct(K.spectral, 0.5)


def test_fluid_static_and_diffusive_limits():
    fp = A.FluidParams(1.5, 0.4, 0.0)
    p = np.array([0.3, 0.0, 0.4])
    G = A.fluid_current_response(fp, 0.0, p)
    assert G[0, 0] == fp.sigma / fp.D
    assert fp.susceptibility == fp.sigma / fp.D
    # tau = 0: G00 = i sigma p^2 / (p0 + i D p^2)
    p0 = 0.7 + 0.1j
    p2 = p @ p
    assert np.isclose(A.fluid_current_response(fp, p0, p)[0, 0], 1j * fp.sigma * p2 / (p0 + 1j * fp.D * p2), rtol=1e-14)


@given(
    st.floats(-5, 5), st.floats(0, 2),
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    st.floats(0.01, 2), st.floats(0.01, 2), st.floats(0, 1),
)
def test_ward_identity(re, im, p, sigma, D, tau):
    fp = A.FluidParams(sigma, D, tau)
    try:
        res = A.ward_residual(fp, complex(re, im), p)
    except PoleHit:
        return
    assert res < 1e-12


def test_fluid_poles():
    fp = A.FluidParams(1.0, 0.5, 0.2)
    p = np.array([1.0, 2.0, 0.0])
    p2 = p @ p
    roots = np.roots([-1j * fp.tau, 1.0, 1j * fp.D * p2])
    poles = A.fluid_poles(fp, p)
    assert np.allclose(np.sort_complex(poles[:2]), np.sort_complex(roots), atol=1e-12)
    assert np.isclose(poles[2], -1j / fp.tau)
    for pole in poles:
        with pytest.raises(PoleHit):
            A.fluid_current_response(fp, pole, p)
    assert np.allclose(A.fluid_poles(A.FluidParams(1.0, 0.5, 0.0), p), [-1j * 0.5 * p2])
