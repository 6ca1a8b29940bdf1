"""2-D incompressible Navier-Stokes in vorticity form with a drag forcing.

    d_t omega = nu lap omega - u . grad omega - curl(drag)

The mean flow (zero mode of ``u``), invisible to the vorticity, is carried
separately and obeys ``d_t mean(u) = -mean(drag)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import NumericalAbort
from .spectral import Grid2D, SpectralField, velocity_coeffs

CFL_MAX = 0.5


@dataclass(frozen=True)
class CutoffRule:
    """Smooth cut-off ``chi0_R``: 1 below ``R - 1``, 0 above ``R``."""

    R: float = math.inf

    def __call__(self, s: float) -> float:
        return chi0(s, self.R)


def _psi(t: float) -> float:
    return math.exp(-1.0 / t) if t > 0 else 0.0


def chi0(s: float, R: float) -> float:
    if math.isinf(R) or s <= R - 1.0:
        return 1.0
    if s >= R:
        return 0.0
    a = _psi(R - s)
    b = _psi(s - (R - 1.0))
    return a / (a + b)


def cutoff_value(u: SpectralField, rule: CutoffRule) -> float:
    """``chi_R(u) = chi0_R(||u||_inf)`` with the sup over grid nodes."""
    return rule(u.sup())


@dataclass(frozen=True, eq=False)
class FluidState:
    grid: Grid2D
    omega_hat: np.ndarray = field(repr=False)
    mean_flow: np.ndarray = field(default_factory=lambda: np.zeros(2))
    time: float = 0.0

    @classmethod
    def from_vorticity(cls, omega: SpectralField, mean_flow=(0.0, 0.0), time: float = 0.0) -> FluidState:
        w = omega.coeffs.copy()
        w[0, 0] = 0.0
        return cls(omega.grid, w, np.asarray(mean_flow, dtype=float), time)

    @cached_property
    def omega(self) -> SpectralField:
        return SpectralField.from_coeffs(self.grid, self.omega_hat)

    @cached_property
    def u(self) -> SpectralField:
        return SpectralField.from_coeffs(self.grid, velocity_coeffs(self.grid, self.omega_hat, self.mean_flow))

    def energy(self) -> float:
        """``1/2 int |u|^2``."""
        return 0.5 * float(np.sum(np.abs(self.u.coeffs) ** 2))

    def enstrophy(self) -> float:
        """``int omega^2`` (equals ``int |grad u|^2`` on the torus)."""
        return float(np.sum(np.abs(self.omega_hat) ** 2))


def _nonlinear(grid: Grid2D, w_hat: np.ndarray, mean_flow: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of ``-u . grad omega``."""
    w_hat = w_hat * grid.dealias
    kx, ky = grid.k
    u = grid.inverse(velocity_coeffs(grid, w_hat, mean_flow))
    wx = grid.inverse(1j * kx * w_hat)
    wy = grid.inverse(1j * ky * w_hat)
    adv = u[0] * wx + u[1] * wy
    return -grid.forward(adv) * grid.dealias


def cfl_number(state: FluidState, dt: float) -> float:
    u = state.u.values
    return float(dt * (np.abs(u[0]).max() + np.abs(u[1]).max()) / state.grid.h)


def ns_step(state: FluidState, drag: SpectralField | None, dt: float, nu: float = 1.0) -> FluidState:
    """One integrating-factor Heun step; ``drag`` is held fixed over the step."""
    grid = state.grid
    cfl = cfl_number(state, dt)
    if cfl > CFL_MAX:
        raise NumericalAbort(f"advective CFL {cfl:.3f} exceeds {CFL_MAX}", subsystem="fluid")
    if drag is None:
        force = 0.0
        mean_drag = np.zeros(2)
    else:
        kx, ky = grid.k
        g = drag.coeffs * grid.dealias
        force = -(1j * kx * g[1] - 1j * ky * g[0])
        mean_drag = drag.coeffs[:, 0, 0].real

    decay = np.exp(-nu * grid.k2 * dt)
    w0 = state.omega_hat
    m0 = state.mean_flow
    m1 = m0 - dt * mean_drag
    n0 = _nonlinear(grid, w0, m0) + force
    w1 = decay * (w0 + dt * n0)
    n1 = _nonlinear(grid, w1, m1) + force
    w = decay * w0 + 0.5 * dt * (decay * n0 + n1)
    w[0, 0] = 0.0
    if not np.all(np.isfinite(w)):
        raise NumericalAbort("non-finite vorticity", subsystem="fluid")
    return replace(state, omega_hat=w, mean_flow=m1, time=state.time + dt)
