"""Moment inequalities for nonnegative phase-space densities.

Each inequality bounds a velocity marginal (``m0`` or ``|m1|``) at every
``x`` by splitting the velocity integral at a radius ``r(x)``:

    inner ball term   a(x) * r**p        (sup norm or Hoelder on the ball)
    outer tail term   b(x) * r**(-q)     (a higher moment divided by r**q)

The radius minimising ``g(r) = a r^p + b r^-q`` is found per node by
bisection on ``g'``. Squaring (or raising to the fourth power) the minimum
and integrating over the torus gives the global bound. The constants in
:data:`CONSTANTS` are the ones this construction produces in closed form;
the test-suite recovers them independently with a brute-force search.

The density is read as piecewise constant on the velocity cells, so
``m_k`` and ``M_k`` here are exact cell integrals of ``|v|^k`` (rather than
the smooth-function moment weights used by the solver diagnostics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kinetic import KineticDensity

# Radius construction exponents and the matching closed-form constants.
CONSTANTS = {
    "1a": 4.0 * math.pi,
    "1b": 256.0 * math.pi**3 / 27.0,
    "2": 8.0 * math.pi / 3.0,
    "3": 3.0 * 2.0 ** (-1.0 / 3.0) * math.pi,
    "4": 0.9 * 2.0 ** (2.0 / 3.0) * math.pi,
    "5": 1.0,
}
RELATIVE_SLACK = 1e-10


def radius_factor(p: float, q: float) -> float:
    """``K`` with ``min_r (a r^p + b r^-q) = K a^(q/(p+q)) b^(p/(p+q))``."""
    return (p + q) / q * (q / p) ** (p / (p + q))


def optimal_radius(a, b, p: float, q: float, rtol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Minimiser of ``a r^p + b r^-q`` over ``r > 0`` by vectorised bisection on the derivative.

    Nodes with ``a == 0`` or ``b == 0`` have no interior minimum; they get
    ``inf`` or ``0`` respectively, where the bound degenerates to zero.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    r = np.zeros(a.shape)
    live = (a > 0) & (b > 0)
    r[(a == 0) & (b > 0)] = np.inf
    if not live.any():
        return r
    al, bl = a[live], b[live]

    def slope_sign(x):
        return p * al * x ** (p + q) - q * bl  # sign of g'(x) * x**(q+1)

    lo = np.ones(al.shape)
    hi = np.ones(al.shape)
    while np.any(m := slope_sign(lo) > 0):
        lo[m] *= 0.5
    while np.any(m := slope_sign(hi) < 0):
        hi[m] *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        up = slope_sign(mid) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.all(hi - lo <= rtol * hi):
            break
    r[live] = 0.5 * (lo + hi)
    return r


def split_bound(a, b, p: float, q: float) -> np.ndarray:
    """``a r^p + b r^-q`` evaluated at the bisection radius (zero where a or b vanishes)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    r = optimal_radius(a, b, p, q)
    out = np.zeros(a.shape)
    live = (a > 0) & (b > 0)
    rl = r[live]
    out[live] = a[live] * rl**p + b[live] * rl ** (-q)
    return out


@lru_cache(maxsize=32)
def _cell_speed_power(nv: int, vmax: float, k: int, order: int = 16) -> np.ndarray:
    """Cell averages of ``|v|^k`` by tensor Gauss-Legendre quadrature."""
    h = 2.0 * vmax / nv
    edges = -vmax + h * np.arange(nv)
    t, w = np.polynomial.legendre.leggauss(order)
    nodes = (edges[:, None] + 0.5 * h * (t + 1.0)).ravel()  # (nv*order,)
    wts = np.tile(0.5 * w, nv)
    s2 = nodes[:, None] ** 2 + nodes[None, :] ** 2
    vals = s2 ** (0.5 * k) * wts[:, None] * wts[None, :]
    vals = vals.reshape(nv, order, nv, order).sum(axis=(1, 3))
    vals.flags.writeable = False
    return vals


@dataclass(frozen=True)
class Marginals:
    """Nodewise velocity integrals of a nonnegative piecewise-constant density."""

    hx: float
    sup: float  # ||F||_inf
    l1: float
    l4_4: float  # ||F||_4^4
    m0: np.ndarray
    m1: np.ndarray  # |m1F(x)|, Euclidean norm of the vector moment
    mk: dict  # k -> m_kF(x)
    f4: np.ndarray  # (int F(x, v)^4 dv)^(1/4)

    def M(self, k: int) -> float:
        return float(self.mk[k].sum() * self.hx**2)

    def l2sq(self, field: np.ndarray) -> float:
        return float((field**2).sum() * self.hx**2)

    def l4_4_of(self, field: np.ndarray) -> float:
        return float((field**4).sum() * self.hx**2)

    @classmethod
    def of(cls, F: KineticDensity) -> Marginals:
        g = F.grid
        f = np.clip(F.values, 0.0, None)
        dv = g.hv**2
        mk = {}
        for k in range(7):
            w = _cell_speed_power(g.nv, float(g.vmax), k)
            mk[k] = np.tensordot(f, w, axes=([2, 3], [0, 1])) * dv
        V1, V2 = g.vmesh
        m1 = np.hypot((f * V1).sum(axis=(2, 3)), (f * V2).sum(axis=(2, 3))) * dv
        f4 = ((f**4).sum(axis=(2, 3)) * dv) ** 0.25
        return cls(
            hx=g.hx,
            sup=float(f.max()),
            l1=float(f.sum() * g.cell_volume),
            l4_4=float((f**4).sum() * g.cell_volume),
            m0=f.sum(axis=(2, 3)) * dv,
            m1=m1,
            mk=mk,
            f4=f4,
        )


@dataclass(frozen=True)
class InequalityCheck:
    item: str
    lhs: float  # the norm being bounded
    split: float  # integrated pointwise split bound
    rhs: float  # constant times the right-hand side quantity
    constant: float

    @property
    def ok(self) -> bool:
        tol = RELATIVE_SLACK * max(abs(self.rhs), 1e-300)
        return self.lhs <= self.split + tol and self.split <= self.rhs + tol

    def to_dict(self) -> dict:
        return {
            "item": self.item,
            "lhs": self.lhs,
            "split": self.split,
            "rhs": self.rhs,
            "constant": self.constant,
            "ok": self.ok,
        }


def check_marginals(F: KineticDensity) -> list[InequalityCheck]:
    """All five inequalities (item 5 for every pair ``k < k'`` in 0..6) on one density."""
    mg = Marginals.of(F)
    A = mg.sup
    hx2 = mg.hx**2
    out = []

    # 1a: m0 <= pi A r^2 + m2 r^-2
    b = split_bound(math.pi * A, mg.mk[2], 2, 2)
    out.append(InequalityCheck("1a", mg.l2sq(mg.m0), float((b**2).sum() * hx2), CONSTANTS["1a"] * (A + 1) ** 2 * mg.M(2), CONSTANTS["1a"]))
    # 1b: m0 <= pi A r^2 + m6 r^-6, fourth power
    b = split_bound(math.pi * A, mg.mk[6], 2, 6)
    out.append(InequalityCheck("1b", mg.l4_4_of(mg.m0), float((b**4).sum() * hx2), CONSTANTS["1b"] * (A + 1) ** 4 * mg.M(6), CONSTANTS["1b"]))
    # 2: |m1| <= (2 pi / 3) A r^3 + m4 r^-3
    b = split_bound(2.0 * math.pi / 3.0 * A, mg.mk[4], 3, 3)
    out.append(InequalityCheck("2", mg.l2sq(mg.m1), float((b**2).sum() * hx2), CONSTANTS["2"] * (A + 1) ** 2 * mg.M(4), CONSTANTS["2"]))
    # 3: m0 <= (pi r^2)^(3/4) f4 + m3 r^-3, then Young with exponents 3 and 3/2
    b = split_bound(math.pi**0.75 * mg.f4, mg.mk[3], 1.5, 3)
    split = float((b**2).sum() * hx2)
    out.append(InequalityCheck("3", mg.l2sq(mg.m0), split, CONSTANTS["3"] * (mg.l4_4 + mg.M(3)), CONSTANTS["3"]))
    # 4: |m1| <= (3 pi / 5)^(3/4) r^(5/2) f4 + m6 r^-5
    b = split_bound((0.6 * math.pi) ** 0.75 * mg.f4, mg.mk[6], 2.5, 5)
    split = float((b**2).sum() * hx2)
    out.append(InequalityCheck("4", mg.l2sq(mg.m1), split, CONSTANTS["4"] * (mg.l4_4 + mg.M(6)), CONSTANTS["4"]))
    # 5: fixed radius r = 1
    for k in range(7):
        for kp in range(k + 1, 7):
            split = float((mg.m0 + mg.mk[kp]).sum() * hx2)
            out.append(InequalityCheck(f"5[{k},{kp}]", mg.M(k), split, mg.l1 + mg.M(kp), CONSTANTS["5"]))
    return out


def young_split_items() -> dict:
    """Exponents ``(p, q, power)`` of the radius construction for items 1a to 4."""
    return {"1a": (2, 2, 2), "1b": (2, 6, 4), "2": (3, 3, 2), "3": (1.5, 3, 2), "4": (2.5, 5, 2)}
