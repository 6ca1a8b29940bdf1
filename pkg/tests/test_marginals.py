import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_min_over_radius

from vnsflow import marginals
from vnsflow.initial import InitialDensity
from vnsflow.kinetic import KineticDensity, KineticGrid
from vnsflow.marginals import (
    CONSTANTS,
    Marginals,
    check_marginals,
    optimal_radius,
    radius_factor,
    split_bound,
    young_split_items,
)


@pytest.mark.parametrize("p,q", [(2, 2), (2, 6), (3, 3), (1.5, 3), (2.5, 5)])
def test_bisection_matches_brute_force_search(p, q):
    rng = np.random.default_rng(int(10 * p + q))
    a = rng.uniform(0.01, 10, 6)
    b = rng.uniform(0.01, 10, 6)
    got = split_bound(a, b, p, q)
    for ai, bi, gi in zip(a, b, got):
        brute = brute_min_over_radius(ai, bi, p, q)
        assert gi <= brute * (1 + 1e-12)
        assert gi >= brute * (1 - 1e-6)
    closed = radius_factor(p, q) * a ** (q / (p + q)) * b ** (p / (p + q))
    assert np.allclose(got, closed, rtol=1e-10)


def test_degenerate_radii():
    r = optimal_radius(np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]), 2, 2)
    assert r[0] == np.inf and r[1] == 0.0 and r[2] == 0.0
    assert np.all(split_bound(np.array([0.0, 1.0]), np.array([1.0, 0.0]), 2, 2) == 0.0)


def _random_density(rng, nx=8, nv=24, vmax=3.0):
    g = KineticGrid(nx, nv, vmax)
    f = rng.random((nx, nx, nv, nv)) ** 3
    V1, V2 = g.vmesh
    f *= np.exp(-rng.uniform(0.2, 2.0) * (V1**2 + V2**2))[None, None]
    f *= rng.uniform(0.01, 20)
    return KineticDensity(g, f)


def _brute_constant(F, item):
    """Integrated brute-force pointwise minimum divided by the inequality's right-hand quantity
    (before the +1 relaxation and the Young step)."""
    mg = Marginals.of(F)
    A = mg.sup
    p, q, power = young_split_items()[item]
    if item in ("1a", "1b"):
        a, b = math.pi * A, mg.mk[2 if item == "1a" else 6]
    elif item == "2":
        a, b = 2 * math.pi / 3 * A, mg.mk[4]
    elif item == "3":
        a, b = math.pi**0.75 * mg.f4, mg.mk[3]
    else:
        a, b = (0.6 * math.pi) ** 0.75 * mg.f4, mg.mk[6]
    vals = np.array([brute_min_over_radius(ai, bi, p, q, num=20001) for ai, bi in zip(a.ravel() if np.ndim(a) else np.full(b.size, a), b.ravel())])
    total = float((vals**power).sum() * mg.hx**2)
    if item == "1a":
        return total / (A * mg.M(2))
    if item == "1b":
        return total / (A**3 * mg.M(6))
    if item == "2":
        return total / (A * mg.M(4))
    tail = mg.M(3) if item == "3" else mg.M(6)
    return total / (mg.l4_4 + tail)


@pytest.mark.parametrize("item", ["1a", "1b", "2"])
def test_brute_force_calibration_recovers_sup_norm_constants(item):
    rng = np.random.default_rng(3)
    c = max(_brute_constant(_random_density(rng, nx=8, nv=16), item) for _ in range(3))
    assert c == pytest.approx(CONSTANTS[item], rel=1e-5)


@pytest.mark.parametrize("item", ["3", "4"])
def test_brute_force_calibration_stays_below_young_constants(item):
    rng = np.random.default_rng(4)
    c = max(_brute_constant(_random_density(rng, nx=8, nv=16), item) for _ in range(3))
    assert c <= CONSTANTS[item] * (1 + 1e-6)


def test_no_violations_on_initial_data():
    g = KineticGrid(16, 32, 3.0)
    for f0 in (InitialDensity(ax=0.5, ay=0.5), InitialDensity(ax=0.9, v_std=0.3, v_mean=(0.5, -0.2))):
        checks = check_marginals(KineticDensity.from_initial(g, f0))
        assert len(checks) == 5 + 21
        assert all(c.ok for c in checks)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_no_violations_on_random_nonnegative_densities(seed):
    F = _random_density(np.random.default_rng(seed), nx=8, nv=16)
    bad = [c.to_dict() for c in check_marginals(F) if not c.ok]
    assert not bad


def test_checker_flags_a_constant_that_is_too_small(monkeypatch):
    monkeypatch.setitem(marginals.CONSTANTS, "1a", 1e-3)
    g = KineticGrid(8, 24, 3.0)
    checks = {c.item: c for c in check_marginals(KineticDensity.from_initial(g, InitialDensity()))}
    assert not checks["1a"].ok and checks["2"].ok
