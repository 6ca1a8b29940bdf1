"""Initial data: the fluid velocity ``u0`` and the phase-space density ``F0``.

``F0`` is restricted to product form

    F0(x, v) = rho(x1) rho(x2) g(v1) g(v2),  rho(s) = 1 + a cos(2 pi s)

with ``g`` a Gaussian (optionally truncated) or Student-t profile around a
mean velocity. A nonzero ``v_corr`` correlates the two velocity axes; the
grid solvers accept it, the particle sampler does not.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError
from .spectral import TWO_PI, Grid2D, SpectralField, curl_inverse


@dataclass(frozen=True)
class InitialDensity:
    ax: float = 0.0
    ay: float = 0.0
    v_mean: tuple[float, float] = (0.0, 0.0)
    v_std: float = 0.5
    v_cut: float = 8.0
    v_tail: str = "gaussian"
    v_dof: float = 3.0
    v_corr: float = 0.0
    mass: float = 1.0

    def __post_init__(self):
        if abs(self.ax) >= 1 or abs(self.ay) >= 1:
            raise ConfigError("spatial modulation amplitudes must satisfy |a| < 1")
        if self.v_std <= 0:
            raise ConfigError("v_std must be positive")
        if self.v_tail not in ("gaussian", "student"):
            raise ConfigError(f"unknown velocity tail {self.v_tail!r}")
        if not -1 < self.v_corr < 1:
            raise ConfigError("v_corr must lie in (-1, 1)")
        object.__setattr__(self, "v_mean", tuple(float(m) for m in self.v_mean))

    @property
    def is_product(self) -> bool:
        return self.v_corr == 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    # -- one-dimensional factors ----------------------------------------
    def rho(self, s: np.ndarray, a: float) -> np.ndarray:
        return 1.0 + a * np.cos(TWO_PI * s)

    def _vdist(self):
        if self.v_tail == "gaussian":
            return stats.norm(scale=self.v_std)
        return stats.t(self.v_dof, scale=self.v_std)

    def v_profile(self, w: np.ndarray) -> np.ndarray:
        """Density of one velocity component, centred (``w = v - mean``)."""
        d = self._vdist()
        lo, hi = d.cdf(-self.v_cut * self.v_std), d.cdf(self.v_cut * self.v_std)
        out = d.pdf(w) / (hi - lo)
        return np.where(np.abs(w) <= self.v_cut * self.v_std, out, 0.0)

    def velocity_density(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        w1, w2 = v1 - self.v_mean[0], v2 - self.v_mean[1]
        if self.is_product:
            return self.v_profile(w1) * self.v_profile(w2)
        # correlated Gaussian; only used on grids
        s2 = self.v_std**2
        c = self.v_corr
        q = (w1**2 - 2 * c * w1 * w2 + w2**2) / (s2 * (1 - c * c))
        return np.exp(-0.5 * q) / (TWO_PI * s2 * np.sqrt(1 - c * c))

    def v_cell_profile(self, centres: np.ndarray, h: float) -> np.ndarray:
        """Average of the one-axis profile over cells ``[c - h/2, c + h/2]`` (centred variable)."""
        d = self._vdist()
        cut = self.v_cut * self.v_std
        lo, hi = d.cdf(-cut), d.cdf(cut)
        a = np.clip(centres - 0.5 * h, -cut, cut)
        b = np.clip(centres + 0.5 * h, -cut, cut)
        return (d.cdf(b) - d.cdf(a)) / ((hi - lo) * h)

    def on_grid(self, x_nodes: np.ndarray, v_nodes: np.ndarray, hv: float | None = None) -> np.ndarray:
        """Sample on the tensor grid, shape ``(nx, nx, nv, nv)``.

        With ``hv`` the velocity factor is averaged over the cells of width
        ``hv`` centred at ``v_nodes`` instead of sampled at them.
        """
        rx = self.rho(x_nodes, self.ax)
        ry = self.rho(x_nodes, self.ay)
        if hv is None:
            V1, V2 = np.meshgrid(v_nodes, v_nodes, indexing="ij")
            g = self.velocity_density(V1, V2)
        elif self.is_product:
            g = np.outer(self.v_cell_profile(v_nodes - self.v_mean[0], hv), self.v_cell_profile(v_nodes - self.v_mean[1], hv))
        else:
            q, w = np.polynomial.legendre.leggauss(6)
            pts = v_nodes[:, None] + 0.5 * hv * q[None, :]
            P1 = pts[:, None, :, None]
            P2 = pts[None, :, None, :]
            g = np.einsum("abij,i,j->ab", self.velocity_density(P1, P2), w, w) / 4.0
        return self.mass * rx[:, None, None, None] * ry[None, :, None, None] * g[None, None]

    # -- inverse CDFs ----------------------------------------------------
    def x_quantile(self, u: np.ndarray, a: float) -> np.ndarray:
        """Invert ``s + a sin(2 pi s) / (2 pi)`` on [0, 1) by bisection."""
        u = np.asarray(u, dtype=float)
        if a == 0.0:
            return u.copy()
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = mid + a * np.sin(TWO_PI * mid) / TWO_PI < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def v_quantile(self, u: np.ndarray) -> np.ndarray:
        d = self._vdist()
        lo, hi = d.cdf(-self.v_cut * self.v_std), d.cdf(self.v_cut * self.v_std)
        return d.ppf(lo + u * (hi - lo))


@dataclass(frozen=True)
class InitialVelocity:
    """``kind`` is one of ``zero``, ``taylor_green``, ``shear`` or ``random``."""

    kind: str = "zero"
    amplitude: float = 1.0
    seed: int = 0
    modes: int = 3

    def __post_init__(self):
        if self.kind not in ("zero", "taylor_green", "shear", "random"):
            raise ConfigError(f"unknown initial velocity {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def vorticity(self, grid: Grid2D) -> SpectralField:
        X, Y = grid.mesh
        A = self.amplitude
        if self.kind == "zero":
            w = np.zeros_like(X)
        elif self.kind == "taylor_green":
            # u = A (cos 2pi x sin 2pi y, -sin 2pi x cos 2pi y)
            w = -2.0 * TWO_PI * A * np.cos(TWO_PI * X) * np.cos(TWO_PI * Y)
        elif self.kind == "shear":
            # u = (A sin 2pi y, 0)
            w = -TWO_PI * A * np.cos(TWO_PI * Y)
        else:
            rng = np.random.default_rng(self.seed)
            m = np.arange(-self.modes, self.modes + 1)
            w = np.zeros_like(X)
            for p in m:
                for q in m:
                    if p == 0 and q == 0:
                        continue
                    c = rng.normal() / (p * p + q * q)
                    ph = rng.uniform(0, TWO_PI)
                    w += c * np.cos(TWO_PI * (p * X + q * Y) + ph)
            w = w - w.mean()
            w = w * (A / curl_inverse(SpectralField(grid, w), tol=1e-9).sup())
        w = w - w.mean()
        return SpectralField(grid, w)


def taylor_green_vorticity(grid: Grid2D, amplitude: float, t: float = 0.0, nu: float = 1.0) -> SpectralField:
    """Analytic Taylor-Green vorticity on the unit torus at time ``t``."""
    w0 = InitialVelocity("taylor_green", amplitude).vorticity(grid)
    return w0.scaled(np.exp(-2.0 * TWO_PI**2 * nu * t))
