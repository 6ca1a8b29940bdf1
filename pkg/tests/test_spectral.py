import numpy as np
import pytest
from conftest import smooth_random_scalar
from hypothesis import given, settings
from hypothesis import strategies as st

from vnsflow.spectral import (
    Grid2D,
    SpectralError,
    SpectralField,
    convolve,
    curl,
    curl_inverse,
    gradient,
    interpolate,
    interpolate_values,
    perp_div,
    sobolev_norm,
)

TP = 2 * np.pi


def test_grid_rejects_non_power_of_two():
    with pytest.raises(SpectralError):
        Grid2D(24)


def test_zero_vorticity_gives_zero_velocity():
    g = Grid2D(16)
    assert curl_inverse(SpectralField.zeros(g)).sup() == 0.0


def test_single_shear_mode_inverts_by_hand():
    g = Grid2D(32)
    X, Y = g.mesh
    u = curl_inverse(SpectralField(g, -TP * np.cos(TP * Y)))
    assert np.max(np.abs(u.values[0] - np.sin(TP * Y))) < 1e-13
    assert np.max(np.abs(u.values[1])) < 1e-13


def test_curl_inverse_round_trip(rng):
    g = Grid2D(32)
    w = smooth_random_scalar(g, rng)
    back = curl(curl_inverse(w))
    assert np.max(np.abs(back.values - w.values)) <= 1e-12


def test_nonzero_mean_vorticity_rejected():
    g = Grid2D(16)
    with pytest.raises(SpectralError, match="zero mean"):
        curl_inverse(SpectralField(g, np.ones((16, 16))))


def test_perp_div_cases(rng):
    g = Grid2D(32)
    X, Y = g.mesh
    const = SpectralField(g, np.stack([np.full_like(X, 2.0), np.full_like(X, -1.0)]))
    assert perp_div(const).sup() < 1e-14
    f = SpectralField(g, np.stack([np.zeros_like(X), np.sin(TP * X)]))
    assert np.max(np.abs(perp_div(f).values - TP * np.cos(TP * X))) < 1e-12
    phi = smooth_random_scalar(g, rng)
    assert perp_div(gradient(phi)).sup() < 1e-12


def test_convolution_properties(rng):
    g = Grid2D(32)
    X, Y = g.mesh
    kern = np.exp(3 * (np.cos(TP * X) + np.cos(TP * Y)))
    kern = SpectralField(g, kern / g.quad(kern))
    c = SpectralField(g, np.full_like(X, 3.5))
    assert np.allclose(convolve(c, kern).values, 3.5, atol=1e-13)
    mode = SpectralField(g, np.cos(TP * (2 * X + Y)))
    expect = kern.coeffs[2, 1].real * mode.values  # symmetric kernel: real coefficient
    assert np.max(np.abs(convolve(mode, kern).values - expect)) < 1e-13
    delta = np.zeros_like(X)
    delta[0, 0] = 1.0 / g.h**2
    f = smooth_random_scalar(g, rng)
    assert np.max(np.abs(convolve(f, SpectralField(g, delta)).values - f.values)) < 1e-12


def test_convolution_rejects_unnormalised_kernel():
    g = Grid2D(16)
    with pytest.raises(SpectralError, match="integrates"):
        convolve(SpectralField.zeros(g), SpectralField(g, np.full((16, 16), 2.0)))


def test_interpolation_nodal_and_analytic(rng):
    g = Grid2D(32)
    X, Y = g.mesh
    f = SpectralField(g, np.sin(TP * X) * np.cos(TP * 2 * Y))
    idx = rng.integers(0, 32, (20, 2))
    pts = idx * g.h
    assert np.array_equal(interpolate(f, pts), f.values[idx[:, 0], idx[:, 1]])
    s = SpectralField(g, np.sin(TP * X))
    assert abs(interpolate(s, [0.25, 0.37]) - 1.0) < 50 * g.h**4


def test_interpolation_is_fourth_order(rng):
    pts = rng.random((200, 2))
    errs = []
    for n in (16, 32, 64):
        g = Grid2D(n)
        X, Y = g.mesh
        vals = np.sin(TP * X) * np.cos(TP * Y) + 0.5 * np.cos(TP * (X + 2 * Y))
        exact = np.sin(TP * pts[:, 0]) * np.cos(TP * pts[:, 1]) + 0.5 * np.cos(TP * (pts[:, 0] + 2 * pts[:, 1]))
        errs.append(np.max(np.abs(interpolate_values(g, vals, pts) - exact)))
    assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8


def test_sobolev_norms():
    g = Grid2D(32)
    X, _ = g.mesh
    assert sobolev_norm(SpectralField.zeros(g), 1.0) == 0.0
    f = SpectralField(g, np.sin(TP * X))
    assert abs(sobolev_norm(f, 0) - 1 / np.sqrt(2)) < 1e-14
    ratio = sobolev_norm(f, 1) / sobolev_norm(f, 0)
    assert abs(ratio - np.sqrt(1 + TP**2)) < 1e-12
    with pytest.raises(SpectralError):
        sobolev_norm(f, 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_velocity_is_divergence_free_and_round_trips(seed):
    g = Grid2D(16)
    w = smooth_random_scalar(g, np.random.default_rng(seed), modes=3)
    u = curl_inverse(w, mean_flow=(0.3, -0.1))
    kx, ky = g.k
    div = kx * u.coeffs[0] + ky * u.coeffs[1]
    assert np.max(np.abs(div)) < 1e-12
    assert np.allclose(u.mean(), [0.3, -0.1], atol=1e-14)
    assert np.max(np.abs(curl(u).values - w.values)) < 1e-11
