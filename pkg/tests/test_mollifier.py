import numpy as np
import pytest

from vnsflow.mollifier import (
    MollifierError,
    check_hypotheses,
    make_mollifier_pair,
    scale_for,
    unit_bump,
)
from vnsflow.spectral import Grid2D


def test_scale_formula():
    assert scale_for(16, 0.25) == 0.5
    assert scale_for(1, 0.2) == 1.0
    with pytest.raises(MollifierError, match="β ≤ 1/4"):
        scale_for(100, 0.3)
    assert scale_for(100, 0.3, allow_large_beta=True) == pytest.approx(100**-0.3)


@pytest.mark.parametrize("eps", [0.5, 0.25, 0.177])
def test_hypotheses_hold(eps):
    rep = check_hypotheses(make_mollifier_pair(eps))
    assert abs(rep["theta0_mass"] - 1) <= 1e-8
    assert abs(rep["theta1_mass"] - 1) <= 1e-8
    assert rep["theta1_first_moment"] <= 1e-10
    assert np.isfinite(rep["grad_bound_const"])


def test_theta0_grid_mass():
    m = make_mollifier_pair(0.25)
    g = Grid2D(64)
    assert abs(g.quad(m.theta0_field(g).values) - 1) < 1e-10


def test_asymmetric_theta1_is_caught():
    def lopsided(v):
        return unit_bump(v) * (1 + 0.5 * np.asarray(v)[..., 0])

    with pytest.raises(MollifierError, match="symmetry"):
        make_mollifier_pair(0.3, theta1_unit=lopsided)


def test_theta1_support_and_scaling():
    m = make_mollifier_pair(0.2)
    v = np.array([[0.19, 0.0], [0.0, 0.21], [0.15, 0.15]])
    vals = m.theta1(v)
    assert vals[0] > 0 and vals[1] == 0 and vals[2] == 0
    assert m.support_radius == pytest.approx(0.2)


def test_bad_scale_rejected():
    with pytest.raises(MollifierError):
        make_mollifier_pair(0.8)
