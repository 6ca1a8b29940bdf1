"""Grid solver for the Vlasov-Fokker-Planck part of the coupled system.

    d_t F + v . grad_x F + div_v((chi u - v) F) = (sigma^2 / 2) lap_v F

on ``T^2 x [-vmax, vmax]^2``. Values are cell averages on a tensor grid with
cell-centred velocity nodes. Both advection operators are conservative
semi-Lagrangian remaps: the primitive (cumulative mass) along one axis is
interpolated with a cubic Hermite at the departure points of the cell
edges, and new cell masses are differences of it. With ``limit=True`` the
Hermite slopes are clipped into the monotone range, so the primitive stays
nondecreasing and ``F`` stays nonnegative.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from ._kernels import remap_last, remap_mid
from .errors import NumericalAbort
from .spectral import Grid2D, SpectralField

log = logging.getLogger(__name__)

BOUNDARY_WARN = 1e-6
BOUNDARY_ABORT = 1e-4
_PAD = 4
_BLOCK = 256


# Taylor coefficients of (x/2) / sinh(x/2): the inverse of averaging over a unit cell.
_UNBOX = (1.0, -1.0 / 24.0, 7.0 / 5760.0, -31.0 / 967680.0)


def _undo_box(x: np.ndarray, p: int, h: float) -> np.ndarray:
    """Apply the inverse cell-averaging operator (width ``h``) to the monomial ``x**p``."""
    out = np.zeros_like(x)
    for n in range(p // 2 + 1):
        out += _UNBOX[n] * h ** (2 * n) * math.perm(p, 2 * n) * x ** (p - 2 * n)
    return out


@dataclass(frozen=True)
class KineticGrid:
    nx: int
    nv: int
    vmax: float

    def __post_init__(self):
        if self.nv < 4:
            raise ValueError("need at least 4 velocity cells per axis")
        if self.vmax <= 0:
            raise ValueError("vmax must be positive")

    @cached_property
    def xgrid(self) -> Grid2D:
        return Grid2D(self.nx)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hv(self) -> float:
        return 2.0 * self.vmax / self.nv

    @cached_property
    def v(self) -> np.ndarray:
        """Cell-centred velocity nodes."""
        return -self.vmax + (np.arange(self.nv) + 0.5) * self.hv

    @cached_property
    def v_edges(self) -> np.ndarray:
        return -self.vmax + np.arange(self.nv + 1) * self.hv

    @property
    def cell_volume(self) -> float:
        return self.hx**2 * self.hv**2

    @cached_property
    def vmesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.v, self.v, indexing="ij")

    @cached_property
    def speed(self) -> np.ndarray:
        V1, V2 = self.vmesh
        return np.hypot(V1, V2)

    def moment_weights(self, k: int) -> np.ndarray:
        """Weights ``w`` with ``sum_j m_j w(v_j) = int |v|^k f`` when ``m_j`` are cell masses of a smooth ``f``.

        For even ``k`` this is the exact inverse of cell averaging applied to
        the polynomial ``|v|^k``; odd ``k`` use the midpoint values.
        """
        if k not in self._powers:
            if k % 2:
                w = self.speed**k
            else:
                V1, V2 = self.vmesh
                h = self.hv
                w = np.zeros_like(V1)
                for i in range(k // 2 + 1):
                    w += math.comb(k // 2, i) * _undo_box(V1, 2 * i, h) * _undo_box(V2, k - 2 * i, h)
            self._powers[k] = w
        return self._powers[k]

    @cached_property
    def _powers(self) -> dict:
        return {}

    @cached_property
    def boundary_layer(self) -> np.ndarray:
        """Velocity cells within 10% of the truncation edge (max-norm)."""
        V1, V2 = self.vmesh
        return np.maximum(np.abs(V1), np.abs(V2)) >= 0.9 * self.vmax


@dataclass(frozen=True, eq=False)
class KineticDensity:
    grid: KineticGrid
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        g = self.grid
        values = np.asarray(self.values, dtype=float)
        if values.shape != (g.nx, g.nx, g.nv, g.nv):
            raise ValueError(f"density shape {values.shape} does not match grid {g}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_initial(cls, grid: KineticGrid, f0) -> KineticDensity:
        return cls(grid, f0.on_grid(grid.xgrid.nodes, grid.v, grid.hv))

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def norm(self, p: float) -> float:
        if np.isinf(p):
            return float(np.abs(self.values).max())
        return float((np.sum(np.abs(self.values) ** p) * self.grid.cell_volume) ** (1.0 / p))

    def boundary_mass(self) -> float:
        f = self.values[:, :, self.grid.boundary_layer]
        return float(np.abs(f).sum() * self.grid.cell_volume)

    def velocity_marginal(self) -> np.ndarray:
        """``int F dx`` on the velocity grid."""
        return self.values.sum(axis=(0, 1)) * self.grid.hx**2

    def kinetic_energy(self) -> float:
        """``1/2 int |v|^2 F``."""
        return 0.5 * moments(self, 2)[1]


def moments(F: KineticDensity, k: int) -> tuple[np.ndarray, float]:
    """``m_k F(x) = int |v|^k F dv`` and ``M_k F = int m_k F dx``.

    Values are cell averages in ``v``; see :meth:`KineticGrid.moment_weights`.
    """
    if k not in range(7):
        raise ValueError(f"moment order must be in 0..6, got {k}")
    g = F.grid
    w = g.moment_weights(k) if k else np.ones((g.nv, g.nv))
    m = np.tensordot(F.values, w, axes=([2, 3], [0, 1])) * g.hv**2
    return m, float(m.sum() * g.hx**2)


def first_moment(F: KineticDensity) -> np.ndarray:
    """``m_1 F(x) = int v F dv`` as a vector field ``(2, nx, nx)``."""
    g = F.grid
    V1, V2 = g.vmesh
    m1 = np.tensordot(F.values, V1, axes=([2, 3], [0, 1]))
    m2 = np.tensordot(F.values, V2, axes=([2, 3], [0, 1]))
    return np.stack([m1, m2]) * g.hv**2


def drag_force_field(F: KineticDensity, u: SpectralField, chi: float) -> SpectralField:
    """``chi (u m_0 F - m_1 F)``, the fluid-side Stokes drag per unit volume."""
    if u.grid.n != F.grid.nx:
        raise ValueError("fluid and kinetic grids are not aligned in x")
    m0, _ = moments(F, 0)
    m1 = first_moment(F)
    return SpectralField(u.grid, chi * (u.values * m0[None] - m1))


# -- conservative remap along the last axis ---------------------------------


def _hermite_slopes(mp: np.ndarray, limit: bool) -> np.ndarray:
    """Primitive slopes at interior edges of the padded cell array ``mp``."""
    L = mp.shape[-1]
    d = np.zeros(mp.shape[:-1] + (L + 1,))
    a, b, c, e = mp[..., :-3], mp[..., 1:-2], mp[..., 2:-1], mp[..., 3:]
    # fourth-order interface value of the density, in mass-per-cell units
    s = (7.0 * (b + c) - (a + e)) / 12.0
    if limit:
        s = np.clip(s, 0.0, 3.0 * np.minimum(b, c))
    d[..., 2:-2] = s
    return d


def remap(mass: np.ndarray, depart: np.ndarray, periodic: bool, limit: bool) -> np.ndarray:
    """New cell masses from departure coordinates of the cell edges.

    ``mass`` has shape ``(..., L)``; ``depart`` broadcasts to ``(..., L + 1)``
    and gives, for each edge ``j``, the coordinate (in cell units, edge ``j``
    at ``j``) it came from. Outside a non-periodic domain the density is zero.
    """
    L = mass.shape[-1]
    p = _PAD
    if periodic:
        mp = np.concatenate([mass[..., -p:], mass, mass[..., :p]], axis=-1)
    else:
        z = np.zeros(mass.shape[:-1] + (p,))
        mp = np.concatenate([z, mass, z], axis=-1)
    G = np.zeros(mp.shape[:-1] + (mp.shape[-1] + 1,))
    np.cumsum(mp, axis=-1, out=G[..., 1:])
    D = _hermite_slopes(mp, limit)

    pos = np.clip(depart, -(p - 2), L + p - 2) + p
    i = np.floor(pos).astype(np.int64)
    np.minimum(i, L + 2 * p - 1, out=i)
    t = pos - i
    shape = np.broadcast_shapes(mass.shape[:-1] + (1,), i.shape)
    i = np.broadcast_to(i, shape)
    t = np.broadcast_to(t, shape)
    g0 = np.take_along_axis(G, i, axis=-1)
    g1 = np.take_along_axis(G, i + 1, axis=-1)
    d0 = np.take_along_axis(D, i, axis=-1)
    d1 = np.take_along_axis(D, i + 1, axis=-1)
    t2 = t * t
    t3 = t2 * t
    Gq = (2 * t3 - 3 * t2 + 1) * g0 + (t3 - 2 * t2 + t) * d0 + (3 * t2 - 2 * t3) * g1 + (t3 - t2) * d1
    return np.diff(Gq, axis=-1)


def _remap_axis(F, axis, alpha, beta, periodic, limit, backend="numba"):
    """Remap along ``axis`` with affine departures ``alpha j + beta``.

    ``alpha`` and ``beta`` broadcast to the shape of ``F`` with ``axis`` removed.
    """
    moved = np.moveaxis(F, axis, -1)
    shp = moved.shape
    a = np.broadcast_to(np.asarray(alpha, dtype=float), shp[:-1])
    b = np.broadcast_to(np.asarray(beta, dtype=float), shp[:-1])
    if backend == "numba":
        F = np.ascontiguousarray(F)
        result = np.empty_like(F)
        if axis in (-1, F.ndim - 1):
            remap_last(moved, np.moveaxis(result, axis, -1), np.ascontiguousarray(a), np.ascontiguousarray(b), periodic, limit)
        else:
            nA = int(np.prod(F.shape[:axis]))
            nB = int(np.prod(F.shape[axis + 1 :]))
            view = (nA, F.shape[axis], nB)
            remap_mid(F.reshape(view), result.reshape(view), np.ascontiguousarray(a).reshape(nA, nB),
                      np.ascontiguousarray(b).reshape(nA, nB), periodic, limit, _BLOCK)
        return result
    if backend == "numpy":
        j = np.arange(shp[-1] + 1, dtype=float)
        out = remap(moved, a[..., None] * j + b[..., None], periodic, limit)
    else:
        raise ValueError(f"unknown remap backend {backend!r}")
    return np.moveaxis(out, -1, axis)


def transport_x(F: np.ndarray, grid: KineticGrid, tau: float, limit: bool = True, backend: str = "numba") -> np.ndarray:
    """Free streaming ``x <- x + v tau`` on both torus axes."""
    shift = grid.v * tau / grid.hx
    # coefficient shapes over the remaining axes (x_other, v1, v2)
    out = _remap_axis(F, 0, 1.0, -shift[None, :, None], True, limit, backend)
    return _remap_axis(out, 1, 1.0, -shift[None, None, :], True, limit, backend)


def drift_v(F: np.ndarray, grid: KineticGrid, a: np.ndarray, tau: float, limit: bool = True, backend: str = "numba") -> np.ndarray:
    """Exact-characteristic remap for ``dv/dt = a(x) - v`` over time ``tau``.

    ``a`` has shape ``(2, nx, nx)``. The backward map
    ``v0 = a + (v - a) e^tau`` is affine and acts on each velocity axis
    separately; the remap of masses accounts for the Jacobian.
    """
    grow = np.exp(tau)
    out = F
    for comp, vaxis in ((0, 2), (1, 3)):
        offset = (a[comp] + grid.vmax) * (1.0 - grow) / grid.hv
        out = _remap_axis(out, vaxis, grow, offset[:, :, None], False, limit, backend)
    return out


@lru_cache(maxsize=32)
def _cn_matrix(nv: int, hv: float, tau: float, diffusivity: float) -> np.ndarray:
    """Crank-Nicolson propagator for ``D d_vv`` with zero-flux ends."""
    L = np.diag(np.full(nv - 1, 1.0), -1) + np.diag(np.full(nv - 1, 1.0), 1) - 2.0 * np.eye(nv)
    L[0, 0] = L[-1, -1] = -1.0
    L *= diffusivity / hv**2
    eye = np.eye(nv)
    return np.linalg.solve(eye - 0.5 * tau * L, eye + 0.5 * tau * L)


def diffuse_v(F: np.ndarray, grid: KineticGrid, tau: float, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return F
    P = _cn_matrix(grid.nv, grid.hv, float(tau), 0.5 * sigma**2)
    f3 = F.reshape(-1, grid.nv, grid.nv)
    # P acts on v1 from the left and on v2 from the right, one 64x64 block per x node
    return np.matmul(np.matmul(P, f3), P.T).reshape(F.shape)


def vfp_step(
    F: KineticDensity,
    u: SpectralField | None,
    chi: float,
    dt: float,
    sigma: float,
    limit: bool = True,
    check_boundary: bool = True,
    backend: str = "numba",
) -> KineticDensity:
    """One Strang step: X(dt/2) D(dt/2) A(dt) D(dt/2) X(dt/2).

    X is free streaming, A the drag drift toward ``chi u``, D velocity
    diffusion. ``u`` is held fixed over the step; ``None`` means ``u = 0``.
    """
    g = F.grid
    if dt * g.vmax > g.hx * (1 + 1e-12):
        raise NumericalAbort(f"transport CFL violated: dt*vmax={dt * g.vmax:.4g} > hx={g.hx:.4g}", subsystem="kinetic")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if u is None:
        a = np.zeros((2, g.nx, g.nx))
    else:
        if u.grid.n != g.nx:
            raise ValueError("fluid and kinetic grids are not aligned in x")
        a = chi * u.values
    f = transport_x(F.values, g, 0.5 * dt, limit, backend)
    f = diffuse_v(f, g, 0.5 * dt, sigma)
    f = drift_v(f, g, a, dt, limit, backend)
    f = diffuse_v(f, g, 0.5 * dt, sigma)
    f = transport_x(f, g, 0.5 * dt, limit, backend)
    if not np.all(np.isfinite(f)):
        raise NumericalAbort("non-finite density", subsystem="kinetic")
    out = replace(F, values=f, time=F.time + dt)
    if check_boundary:
        bm = out.boundary_mass()
        if bm > BOUNDARY_ABORT:
            raise NumericalAbort(f"boundary-layer mass {bm:.3e} exceeds {BOUNDARY_ABORT}; increase vmax", subsystem="kinetic")
    return out


def max_principle_report(history: list[KineticDensity], drift: bool = True) -> dict:
    """Growth of ``||F_t||_inf / ||F_0||_inf`` against the Jacobian bound ``e^{2t}``."""
    f0 = history[0].norm(np.inf)
    t0 = history[0].time
    times = np.array([F.time - t0 for F in history])
    ratios = np.array([F.norm(np.inf) / f0 for F in history])
    bound = np.exp(2.0 * times) if drift else np.ones_like(times)
    return {
        "times": times.tolist(),
        "ratios": ratios.tolist(),
        "sup_ratio": float(ratios.max()),
        "bound": bound.tolist(),
        "max_excess": float(np.max(ratios / bound)),
        "finite": bool(np.all(np.isfinite(ratios))),
    }
