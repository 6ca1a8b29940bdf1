import numpy as np
import pytest

from vnsflow.initial import InitialDensity
from vnsflow.kinetic import KineticGrid, first_moment, moments
from vnsflow.mollifier import make_mollifier_pair
from vnsflow.particles import (
    ParticleEnsemble,
    SamplingError,
    _kernel_sum,
    brownian_normals,
    deposit_drag,
    mollified_density,
    position_density,
    sample_initial,
    step_ensemble,
    step_normals,
)
from vnsflow.spectral import Grid2D


def test_initial_sampling_degenerate_and_variance():
    e = sample_initial(1000, InitialDensity(v_std=1e-9), seed=1)
    assert np.max(np.abs(e.v)) < 1e-7
    n = 100_000
    e = sample_initial(n, InitialDensity(ax=0.5, v_std=0.5), seed=3)
    var = e.v.var(axis=0)
    # standard error of a Gaussian sample variance: s^2 sqrt(2/n)
    assert np.all(np.abs(var - 0.25) < 3 * 0.25 * np.sqrt(2 / n))


def test_initial_sampling_is_reproducible():
    a = sample_initial(500, InitialDensity(ax=0.3), seed=11)
    b = sample_initial(500, InitialDensity(ax=0.3), seed=11)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)


def test_correlated_density_cannot_be_sampled():
    with pytest.raises(SamplingError):
        sample_initial(10, InitialDensity(v_corr=0.3), seed=0)


def test_noise_depends_only_on_seed_step_and_id():
    ids = np.arange(50)
    z_all = step_normals(7, 3, ids)
    z_sub = step_normals(7, 3, ids[[4, 17, 40]])
    assert np.array_equal(z_all[[4, 17, 40]], z_sub)
    assert not np.array_equal(step_normals(7, 4, ids), z_all)


def test_coarse_noise_is_sum_of_fine_increments():
    ids = np.arange(20)
    coarse = brownian_normals(5, 3, ids, substeps=2)
    fine = step_normals(5, 6, ids) + step_normals(5, 7, ids)
    assert np.allclose(coarse, fine / np.sqrt(2), rtol=0, atol=1e-15)


def test_exact_drag_decay_without_noise():
    e = ParticleEnsemble(np.array([[0.1, 0.2]]), np.array([[1.0, 0.0]]))
    dt = 0.01
    for k in range(1, 101):
        e = step_ensemble(e, np.zeros((1, 2)), 1.0, dt, 0.0)
        assert abs(e.v[0, 0] - np.exp(-k * dt)) < 1e-14
    assert e.v[0, 1] == 0.0


def test_constant_flow_is_fixed_point():
    c = np.array([[0.4, -0.3]])
    e = ParticleEnsemble(np.zeros((1, 2)), c.copy())
    e2 = step_ensemble(e, c, 1.0, 0.05, 0.0)
    assert np.allclose(e2.v, c, atol=1e-15)
    e = ParticleEnsemble(np.zeros((1, 2)), np.zeros((1, 2)))
    for _ in range(400):
        e = step_ensemble(e, c, 1.0, 0.05, 0.0)
    assert np.allclose(e.v, c, atol=1e-8)


def test_permutation_equivariance():
    e = sample_initial(30, InitialDensity(), seed=2)
    perm = np.random.default_rng(0).permutation(30)
    u = np.zeros((30, 2))
    a = step_ensemble(e, u, 1.0, 0.01, 0.7)
    b = step_ensemble(e.permuted(perm), u[perm], 1.0, 0.01, 0.7)
    assert np.array_equal(a.v[perm], b.v) and np.array_equal(a.x[perm], b.x)


def test_single_particle_drag_is_minus_kernel():
    g = Grid2D(32)
    m = make_mollifier_pair(0.3)
    e = ParticleEnsemble(np.array([[0.31, 0.62]]), np.array([[1.0, 0.0]]))
    d = deposit_drag(e, np.zeros((1, 2)), 1.0, m, g, dealias=False)
    X, Y = g.mesh
    diff = np.stack([X - 0.31, Y - 0.62], axis=-1)
    expect = -m.theta0(diff)
    assert np.max(np.abs(d.values[0] - expect)) < 1e-12
    assert np.max(np.abs(d.values[1])) == 0.0
    eq = deposit_drag(e, e.v, 1.0, m, g)
    assert eq.sup() == 0.0


def test_position_density_has_unit_mass(rng):
    g = Grid2D(32)
    m = make_mollifier_pair(0.25)
    e = ParticleEnsemble(rng.random((40, 2)), rng.normal(size=(40, 2)))
    assert abs(g.quad(position_density(e, m, g).values) - 1) < 1e-10


def test_mollified_density_mass_sign_and_moments(rng):
    m = make_mollifier_pair(0.4)
    fine = KineticGrid(8, 160, 1.0)
    one = ParticleEnsemble(np.array([[0.5, 0.5]]), np.array([[0.3, -0.2]]))
    assert abs(mollified_density(one, m, fine).mass() - 1) < 1e-6
    kg = KineticGrid(16, 160, 2.0)
    e = ParticleEnsemble(rng.random((25, 2)), rng.uniform(-1, 1, (25, 2)))
    FN = mollified_density(e, m, kg)
    assert FN.values.min() >= 0
    g = kg.xgrid
    m0 = _kernel_sum(m, g, e.x, np.full(25, 1 / 25))
    m1 = np.stack([_kernel_sum(m, g, e.x, e.v[:, i] / 25) for i in (0, 1)])
    scale = np.abs(m0).max()
    assert np.max(np.abs(moments(FN, 0)[0] - m0)) < 1e-4 * scale
    assert np.max(np.abs(first_moment(FN) - m1)) < 1e-4 * scale


def test_mollified_density_names_escaping_particle():
    m = make_mollifier_pair(0.4)
    kg = KineticGrid(16, 32, 1.0)
    e = ParticleEnsemble(np.zeros((3, 2)), np.array([[0.0, 0.0], [0.9, 0.0], [0.0, 0.0]]))
    with pytest.raises(SamplingError, match="particle 1"):
        mollified_density(e, m, kg)
