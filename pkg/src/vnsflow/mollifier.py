"""Mollifier pair ``theta(x, v) = theta0(x) theta1(v)`` and its scaling with N.

``theta0`` is a von Mises type kernel on the torus,
``exp(kappa (cos 2 pi x1 + cos 2 pi x2))`` normalised, whose concentration
``kappa = KAPPA0 / eps**2`` gives a per-axis standard deviation close to
``eps / 2``. ``theta1`` is the radial bump ``exp(-1 / (1 - |v|^2))`` on the
unit disc, rescaled to the disc of radius ``eps``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .spectral import TWO_PI, Grid2D, SpectralField

KAPPA0 = 1.0 / np.pi**2
KINDS = ("vonmises_bump",)
MAX_BETA = 0.25


class MollifierError(ValueError):
    """A structural hypothesis on the mollifiers failed."""


def _bump_norm() -> float:
    r, _ = integrate.quad(lambda s: s * np.exp(-1.0 / (1.0 - s * s)), 0.0, 1.0, epsabs=1e-15, epsrel=1e-14)
    return 1.0 / (TWO_PI * r)


_BUMP_C = _bump_norm()


def unit_bump(v: np.ndarray) -> np.ndarray:
    """Normalised bump on B(0, 1); ``v`` has a trailing axis of length 2."""
    v = np.asarray(v, dtype=float)
    r2 = v[..., 0] ** 2 + v[..., 1] ** 2
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = _BUMP_C * np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def scale_for(n: int, beta: float, allow_large_beta: bool = False) -> float:
    """Mollification scale ``eps_N = N**(-beta)``."""
    if n < 1:
        raise MollifierError(f"particle count must be >= 1, got {n}")
    if beta <= 0:
        raise MollifierError(f"beta must be positive, got {beta}")
    if beta > MAX_BETA and not allow_large_beta:
        raise MollifierError(f"hypothesis 4 violated: need β ≤ 1/4, got beta={beta}")
    return float(n) ** (-beta)


@dataclass(frozen=True)
class MollifierPair:
    eps: float
    kind: str = "vonmises_bump"
    beta: float | None = None
    theta1_unit: Callable[[np.ndarray], np.ndarray] = unit_bump

    @property
    def kappa(self) -> float:
        return KAPPA0 / self.eps**2

    @property
    def support_radius(self) -> float:
        """Radius of ``supp theta1^eps``."""
        return self.eps

    # -- position kernel -------------------------------------------------
    def theta0_axis(self, d: np.ndarray) -> np.ndarray:
        """One-dimensional factor; ``theta0 = f(d1) f(d2)`` for a displacement d."""
        k = self.kappa
        return np.exp(k * (np.cos(TWO_PI * d) - 1.0)) / special.i0e(k)

    def theta0(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.theta0_axis(x[..., 0]) * self.theta0_axis(x[..., 1])

    def theta0_grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        th = self.theta0(x)
        s = -TWO_PI * self.kappa * np.sin(TWO_PI * x)
        return s * th[..., None]

    def theta0_field(self, grid: Grid2D) -> SpectralField:
        f = self.theta0_axis(grid.nodes)
        return SpectralField(grid, np.outer(f, f))

    def axis_factors(self, nodes: np.ndarray, centers: np.ndarray) -> np.ndarray:
        """``f(nodes[j] - centers[i])`` as an ``(len(centers), len(nodes))`` matrix."""
        return self.theta0_axis(nodes[None, :] - centers[:, None])

    def grad_bound_const(self, grid: Grid2D | None = None) -> float:
        """``max |grad theta0| / theta0``, measured over the nodes of ``grid``."""
        grid = grid or Grid2D(64)
        X, Y = grid.mesh
        pts = np.stack([X, Y], axis=-1)
        g = self.theta0_grad(pts)
        ratio = np.hypot(g[..., 0], g[..., 1]) / self.theta0(pts)
        return float(ratio.max())

    # -- velocity kernel -------------------------------------------------
    def theta1(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.theta1_unit(v / self.eps) / self.eps**2

    def theta(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.theta0(x) * self.theta1(v)


def check_hypotheses(pair: MollifierPair, quad_points: int = 401) -> dict[str, float]:
    """Measure the mollifier hypotheses; raise naming the first one violated."""
    n = 64
    while n * pair.eps < 8.0:
        n *= 2
    grid = Grid2D(n)
    th0 = pair.theta0_field(grid)
    mass0 = grid.quad(th0.values)
    if abs(mass0 - 1.0) > 1e-8:
        raise MollifierError(f"hypothesis 3 (normalisation of theta0): integral = {mass0:.12g}")
    if np.any(th0.values < 0):
        raise MollifierError("hypothesis 3 (theta0 >= 0) violated")

    # unit-scale theta1 on a tensor grid of [-1.2, 1.2]^2
    g = np.linspace(-1.2, 1.2, quad_points)
    h = g[1] - g[0]
    V = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    w = pair.theta1_unit(V)
    if np.any(w < 0):
        raise MollifierError("hypothesis 3 (theta1 >= 0) violated")
    mass1 = w.sum() * h * h
    if abs(mass1 - 1.0) > 1e-8:
        raise MollifierError(f"hypothesis 3 (normalisation of theta1): integral = {mass1:.12g}")
    outside = (V[..., 0] ** 2 + V[..., 1] ** 2) >= 1.0
    if np.any(w[outside] != 0.0):
        raise MollifierError("hypothesis 3 (supp theta1 in B(0,1)) violated")
    first = (w[..., None] * V).sum(axis=(0, 1)) * h * h
    if np.max(np.abs(first)) > 1e-10:
        raise MollifierError(f"hypothesis 3 (symmetry of theta1): first moment = {first}")
    c = pair.grad_bound_const(grid)
    if not np.isfinite(c):
        raise MollifierError("hypothesis 3 (gradient bound of theta0) has no finite constant")
    return {"theta0_mass": mass0, "theta1_mass": mass1, "theta1_first_moment": float(np.max(np.abs(first))), "grad_bound_const": c}


def make_mollifier_pair(
    eps: float,
    kind: str = "vonmises_bump",
    beta: float | None = None,
    theta1_unit: Callable[[np.ndarray], np.ndarray] | None = None,
) -> MollifierPair:
    """Build a validated pair at scale ``eps``.

    ``theta1_unit`` replaces the unit velocity kernel; it exists so that
    validation failures can be exercised.
    """
    if kind not in KINDS:
        raise MollifierError(f"unknown mollifier kind {kind!r}; expected one of {KINDS}")
    if not 0.0 < eps <= 0.5:
        raise MollifierError(f"eps must lie in (0, 0.5], got {eps}")
    pair = MollifierPair(eps=float(eps), kind=kind, beta=beta, theta1_unit=theta1_unit or unit_bump)
    check_hypotheses(pair)
    return pair
