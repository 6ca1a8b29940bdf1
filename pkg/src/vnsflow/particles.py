"""Particle ensemble of the coupled system: positions on the torus, velocities in R^2.

Noise is counter based. The normal increment of particle ``i`` at step ``s``
is row ``i`` of a Philox stream keyed by ``(seed, s)``, so a trajectory is a
function of (seed, particle index, step) only: independent of ensemble size,
ordering and thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .errors import NumericalAbort
from .initial import InitialDensity
from .kinetic import KineticDensity, KineticGrid
from .mollifier import MollifierPair
from .spectral import Grid2D, SpectralField, dealiased

INIT_STREAM = 2**64 - 1


class SamplingError(ValueError):
    pass


def _generator(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed % 2**64, stream % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def step_normals(seed: int, step: int, ids: np.ndarray) -> np.ndarray:
    """Standard normals ``(len(ids), 2)`` for the given particle ids at ``step``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return np.zeros((0, 2))
    z = _generator(seed, step).standard_normal((int(ids.max()) + 1, 2))
    return z[ids]


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    x: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    seed: int = 0
    ids: np.ndarray = field(default=None, repr=False)
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        x = np.mod(np.asarray(self.x, dtype=float).reshape(-1, 2), 1.0)
        v = np.asarray(self.v, dtype=float).reshape(-1, 2)
        if x.shape != v.shape:
            raise ValueError("positions and velocities differ in length")
        ids = np.arange(len(x)) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return len(self.x)

    def permuted(self, perm: np.ndarray) -> ParticleEnsemble:
        return replace(self, x=self.x[perm], v=self.v[perm], ids=self.ids[perm])

    def kinetic_energy(self) -> float:
        """``1/(2N) sum |V_i|^2``."""
        if self.n == 0:
            return 0.0
        return 0.5 * float(np.mean(np.sum(self.v**2, axis=1)))

    def moment(self, k: int) -> float:
        """Empirical ``M_k``: mean of ``|V_i|^k``."""
        if self.n == 0:
            return 0.0
        return float(np.mean(np.hypot(self.v[:, 0], self.v[:, 1]) ** k))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform weights on the support points ``(x_i, v_i)``."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def of(cls, e: ParticleEnsemble) -> EmpiricalMeasure:
        pts = np.hstack([e.x, e.v])
        return cls(pts, np.full(e.n, 1.0 / e.n))


def sample_initial(n: int, f0: InitialDensity, seed: int) -> ParticleEnsemble:
    """I.i.d. draws from a product-form ``F0`` by per-coordinate inverse CDF."""
    if not f0.is_product:
        raise SamplingError("only product-form initial densities can be sampled (v_corr must be 0)")
    u = _generator(seed, INIT_STREAM).random((n, 4))
    x = np.column_stack([f0.x_quantile(u[:, 0], f0.ax), f0.x_quantile(u[:, 1], f0.ay)])
    v = np.column_stack([f0.v_quantile(u[:, 2]), f0.v_quantile(u[:, 3])]) + np.asarray(f0.v_mean)
    return ParticleEnsemble(x, v, seed=seed)


def brownian_normals(seed: int, step: int, ids: np.ndarray, substeps: int = 1) -> np.ndarray:
    """Normalised Brownian increment over one step made of ``substeps`` base increments.

    The base increments at step ``s`` are the streams ``s * substeps + k``, so
    a run with step ``2 dt`` sees the sum of the increments a run with ``dt``
    uses: both are driven by one Brownian path.
    """
    if substeps == 1:
        return step_normals(seed, step, ids)
    z = sum(step_normals(seed, step * substeps + k, ids) for k in range(substeps))
    return z / np.sqrt(substeps)


def step_ensemble(
    e: ParticleEnsemble, u_eps, chi: float, dt: float, sigma: float, substeps: int = 1
) -> ParticleEnsemble:
    """Advance one step of ``dX = V dt``, ``dV = (chi u_eps(X) - V) dt + sigma dB``.

    ``u_eps`` is either the ``(N, 2)`` fluid velocity sampled at the particles
    or a callable returning it from positions. The linear drag is integrated
    exactly (Ornstein-Uhlenbeck transition with ``u_eps`` frozen); positions
    advance with the mean of the old and new velocity. ``substeps`` selects
    the Brownian base level (see :func:`brownian_normals`).
    """
    if not 0.0 <= chi <= 1.0:
        raise ValueError(f"chi must lie in [0, 1], got {chi}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if e.n == 0:
        return replace(e, time=e.time + dt, step=e.step + 1)
    u = u_eps(e.x) if callable(u_eps) else np.asarray(u_eps, dtype=float)
    bad = ~np.all(np.isfinite(u), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalAbort(f"non-finite fluid velocity at particle {i}", step=e.step, subsystem="particles")
    a = np.exp(-dt)
    noise = sigma * np.sqrt(0.5 * (1.0 - a * a)) * brownian_normals(e.seed, e.step, e.ids, substeps)
    v_new = a * e.v + (1.0 - a) * chi * u + noise
    x_new = e.x + 0.5 * (e.v + v_new) * dt
    return replace(e, x=x_new, v=v_new, time=e.time + dt, step=e.step + 1)


def _kernel_sum(m: MollifierPair, grid: Grid2D, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``sum_i w_i theta0_eps(node - x_i)`` on the grid for weights ``(N,)``."""
    # theta0 is separable, so the direct sum over particles is a pair of matrix products
    a = m.axis_factors(grid.nodes, x[:, 0])
    b = m.axis_factors(grid.nodes, x[:, 1])
    return a.T @ (w[:, None] * b)


def check_resolution(m: MollifierPair, grid: Grid2D):
    if m.eps < grid.h:
        raise ValueError(f"mollifier scale {m.eps:.3g} is below one grid cell {grid.h:.3g}")


def deposit_drag(
    e: ParticleEnsemble,
    u_eps_at_particles: np.ndarray,
    chi: float,
    m: MollifierPair,
    grid: Grid2D,
    dealias: bool = True,
) -> SpectralField:
    """``(chi / N) sum_i (u_eps(X_i) - V_i) theta0_eps(x - X_i)`` on the grid."""
    check_resolution(m, grid)
    if e.n == 0:
        return SpectralField.zeros(grid, 2)
    w = (chi / e.n) * (np.asarray(u_eps_at_particles) - e.v)
    g = np.stack([_kernel_sum(m, grid, e.x, w[:, 0]), _kernel_sum(m, grid, e.x, w[:, 1])])
    field_ = SpectralField(grid, g)
    return dealiased(field_) if dealias else field_


def position_density(e: ParticleEnsemble, m: MollifierPair, grid: Grid2D) -> SpectralField:
    """``(1/N) sum_i theta0_eps(x - X_i)``, the spatial marginal of ``F^N``."""
    return SpectralField(grid, _kernel_sum(m, grid, e.x, np.full(e.n, 1.0 / e.n)))


def mollified_density(e: ParticleEnsemble, m: MollifierPair, kgrid: KineticGrid) -> KineticDensity:
    """``F^N = theta_eps * S^N`` sampled on the nodes of a kinetic grid.

    ``theta1`` has compact support, so each particle touches only a small
    patch of velocity cells; the sum is a sparse-dense matrix product.
    """
    reach = np.abs(e.v).max(axis=1) + m.support_radius
    out = np.flatnonzero(reach > kgrid.vmax)
    if out.size:
        i = int(out[0])
        raise SamplingError(f"particle {int(e.ids[i])} with velocity {e.v[i].tolist()} plus kernel radius leaves the velocity grid")
    grid = kgrid.xgrid
    nv = kgrid.nv
    if e.n == 0:
        return KineticDensity(kgrid, np.zeros((grid.n, grid.n, nv, nv)))
    a = m.axis_factors(grid.nodes, e.x[:, 0])
    b = m.axis_factors(grid.nodes, e.x[:, 1])
    pos = (a[:, :, None] * b[:, None, :]).reshape(e.n, -1)

    w = int(np.ceil(m.support_radius / kgrid.hv)) + 1
    offs = np.arange(-w, w + 1)
    centre = np.floor((e.v + kgrid.vmax) / kgrid.hv).astype(np.int64)
    j1 = np.clip(centre[:, 0, None] + offs, 0, nv - 1)
    j2 = np.clip(centre[:, 1, None] + offs, 0, nv - 1)
    d1 = kgrid.v[j1] - e.v[:, 0, None]
    d2 = kgrid.v[j2] - e.v[:, 1, None]
    vals = m.theta1(np.stack(np.broadcast_arrays(d1[:, :, None], d2[:, None, :]), axis=-1))
    # clipped indices can repeat at the grid edge, but theta1 vanishes there
    cols = (j1[:, :, None] * nv + j2[:, None, :]).reshape(e.n, -1)
    rows = np.repeat(np.arange(e.n), cols.shape[1])
    vel = sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(e.n, nv * nv))
    dens = np.asarray((vel.T @ pos).T) / e.n
    return KineticDensity(kgrid, dens.reshape(grid.n, grid.n, nv, nv))
