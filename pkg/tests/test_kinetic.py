import math

import numpy as np
import pytest

from vnsflow.errors import NumericalAbort
from vnsflow.initial import InitialDensity
from vnsflow.kinetic import (
    KineticDensity,
    KineticGrid,
    diffuse_v,
    drag_force_field,
    first_moment,
    max_principle_report,
    moments,
    remap,
    transport_x,
    vfp_step,
)
from vnsflow.spectral import Grid2D, SpectralField


def density(nx=8, nv=64, vmax=4.0, **kw):
    g = KineticGrid(nx, nv, vmax)
    return KineticDensity.from_initial(g, InitialDensity(**kw))


def test_gaussian_moments():
    s = 0.6
    F = density(v_std=s, ax=0.4)
    assert abs(moments(F, 0)[1] - 1) < 1e-8
    assert abs(moments(F, 2)[1] - 2 * s**2) < 1e-8
    assert abs(moments(F, 4)[1] - 8 * s**4) < 1e-7
    assert abs(moments(F, 6)[1] - 48 * s**6) < 1e-6  # E|v|^6 = 48 s^6 in two dimensions
    with pytest.raises(ValueError):
        moments(F, 7)


def test_drag_field_cases():
    g = Grid2D(8)
    X, Y = g.mesh
    u = SpectralField(g, np.stack([np.sin(2 * np.pi * Y), 0.3 * np.cos(2 * np.pi * X)]))
    F = density(ax=0.5, v_mean=(0.4, -0.2))
    zero = KineticDensity(F.grid, np.zeros_like(F.values))
    assert drag_force_field(zero, u, 1.0).sup() == 0.0
    sym = density(ax=0.5)
    assert drag_force_field(sym, SpectralField.zeros(g, 2), 1.0).sup() < 1e-15
    m0 = moments(F, 0)[0]
    expect = 0.7 * (u.values - np.array([0.4, -0.2])[:, None, None]) * m0
    assert np.max(np.abs(drag_force_field(F, u, 0.7).values - expect)) < 1e-10


def test_remap_identity_and_shift():
    rng = np.random.default_rng(1)
    m = rng.random((3, 20))
    edges = np.arange(21, dtype=float)
    assert np.allclose(remap(m, np.broadcast_to(edges, (3, 21)), True, False), m, atol=1e-14)
    shifted = remap(m, np.broadcast_to(edges - 2.0, (3, 21)), True, False)
    assert np.allclose(shifted, np.roll(m, 2, axis=1), atol=1e-13)


def test_numba_and_numpy_backends_agree_bitwise():
    F = density(nx=8, nv=32, vmax=3.0, ax=0.5, ay=0.2, v_mean=(0.2, 0.1))
    g = Grid2D(8)
    X, Y = g.mesh
    u = SpectralField(g, np.stack([np.sin(2 * np.pi * Y), np.cos(2 * np.pi * X)]))
    for limit in (True, False):
        a = vfp_step(F, u, 0.8, 0.02, 0.5, limit=limit, backend="numba")
        b = vfp_step(F, u, 0.8, 0.02, 0.5, limit=limit, backend="numpy")
        assert np.array_equal(a.values, b.values)


def test_mass_conservation_and_positivity():
    F = density(nx=8, nv=32, vmax=4.0, ax=0.6, ay=0.3, v_mean=(0.3, 0.0))
    g = Grid2D(8)
    X, Y = g.mesh
    u = SpectralField(g, np.stack([np.sin(2 * np.pi * Y), -np.sin(2 * np.pi * X)]))
    for _ in range(200):
        F = vfp_step(F, u, 1.0, 0.02, 0.5)
    assert abs(F.mass() - 1) < 1e-10
    assert F.values.min() >= -1e-10


def test_drag_flow_characteristics_without_noise():
    """Mean velocity decays like exp(-t); the x-marginal's phase moves by v0 (1 - exp(-t))."""
    v0 = 0.5
    F = density(nx=16, nv=64, vmax=1.2, ax=0.9, v_mean=(v0, 0.0), v_std=0.1)
    dt, steps = 0.02, 50
    for _ in range(steps):
        F = vfp_step(F, None, 1.0, dt, 0.0)
    t = dt * steps
    mean_v = first_moment(F).sum(axis=(1, 2)) * F.grid.hx**2
    assert abs(mean_v[0] - v0 * math.exp(-t)) < 2e-3 and abs(mean_v[1]) < 1e-12
    rho = F.values.sum(axis=(1, 2, 3))
    phase = np.angle(np.sum(rho * np.exp(-2j * np.pi * F.grid.xgrid.nodes)))
    assert abs(phase + 2 * np.pi * v0 * (1 - math.exp(-t))) < 2e-2
    # velocity spread contracts like exp(-t)
    var = moments(F, 2)[1] - (mean_v**2).sum()
    assert var < 2 * 0.1**2 * math.exp(-2 * t) * 1.5


def test_max_principle_reports():
    F = density(nx=8, nv=48, vmax=3.0, ax=0.5, v_std=0.4)
    hist = [F]
    f = F.values
    for k in range(20):
        f = diffuse_v(f, F.grid, 0.01, 1.0)
        hist.append(KineticDensity(F.grid, f, 0.01 * (k + 1)))
    rep = max_principle_report(hist, drift=False)
    assert rep["sup_ratio"] <= 1.0 and rep["finite"]
    hist = [F]
    for _ in range(10):
        hist.append(vfp_step(hist[-1], None, 1.0, 0.01, 0.0))
    rep = max_principle_report(hist)
    assert rep["finite"] and rep["max_excess"] <= 1.0 + 0.05


def test_transport_cfl_and_boundary_aborts():
    F = density(nx=8, nv=32, vmax=3.0)
    with pytest.raises(NumericalAbort, match="CFL"):
        vfp_step(F, None, 1.0, 0.1, 0.5)
    wide = density(nx=8, nv=32, vmax=1.0, v_std=0.6)
    with pytest.raises(NumericalAbort, match="boundary"):
        vfp_step(wide, None, 1.0, 0.01, 0.5)


def test_pure_transport_preserves_velocity_marginal():
    F = density(nx=16, nv=32, vmax=3.0, ax=0.5, ay=-0.4, v_mean=(0.2, 0.3))
    f = transport_x(F.values, F.grid, 0.005)
    assert np.allclose(f.sum(axis=(0, 1)), F.values.sum(axis=(0, 1)), rtol=1e-12, atol=1e-15)
