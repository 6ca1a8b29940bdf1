"""Periodic 2-D grid on the unit torus and the spectral operators built on it.

Arrays are indexed ``[ix, iy]`` with ``x = ix / n`` along axis 0. Vector
fields carry their components on a leading axis of length 2. Fourier
coefficients use the normalisation ``f(x) = sum_k fhat(k) exp(2 pi i k.x)``,
so ``fhat = fft2(f) / n**2`` and the zero mode is the spatial mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


class SpectralError(ValueError):
    """Raised when an operator's precondition on a field is violated."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``n x n`` grid on the torus R^2 / Z^2."""

    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise SpectralError(f"grid size must be a power of two >= 8, got {self.n}")
        if self.length != 1.0:
            raise SpectralError("domain period is fixed to 1.0")

    @property
    def h(self) -> float:
        return self.length / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.nodes, self.nodes, indexing="ij")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer frequencies per axis in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers ``2 pi m`` broadcast to ``(n, n)``."""
        m = TWO_PI * self.wavenumbers
        return m[:, None] * np.ones(self.n)[None, :], np.ones(self.n)[:, None] * m[None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky = self.k
        return kx**2 + ky**2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros_like(self.k2)
        np.divide(1.0, self.k2, out=out, where=self.k2 > 0)
        return out

    @cached_property
    def dealias(self) -> np.ndarray:
        """Two-thirds rule: keep ``|m| <= n/3`` on each axis."""
        keep = np.abs(self.wavenumbers) <= self.n / 3.0
        return keep[:, None] & keep[None, :]

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft2(values, axes=(-2, -1)) / self.n**2

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(coeffs * self.n**2, axes=(-2, -1)))

    def quad(self, values: np.ndarray) -> float:
        """Trapezoid (equivalently rectangle) quadrature over the torus."""
        return float(np.sum(values, axis=(-2, -1)).sum() * self.h**2)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Scalar ``(n, n)`` or vector ``(2, n, n)`` field with lazy coefficients."""

    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        n = self.grid.n
        if values.shape not in ((n, n), (2, n, n)):
            raise SpectralError(f"field shape {values.shape} does not match grid n={n}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_coeffs(cls, grid: Grid2D, coeffs: np.ndarray) -> SpectralField:
        obj = cls(grid, grid.inverse(coeffs))
        # keep the exact coefficients rather than re-deriving them from values
        obj.__dict__["coeffs"] = np.asarray(coeffs)
        return obj

    @classmethod
    def zeros(cls, grid: Grid2D, components: int = 1) -> SpectralField:
        shape = (grid.n, grid.n) if components == 1 else (2, grid.n, grid.n)
        return cls(grid, np.zeros(shape))

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 2 else 2

    @cached_property
    def coeffs(self) -> np.ndarray:
        return self.grid.forward(self.values)

    def magnitude(self) -> np.ndarray:
        if self.components == 1:
            return np.abs(self.values)
        return np.hypot(self.values[0], self.values[1])

    def sup(self) -> float:
        return float(self.magnitude().max())

    def mean(self):
        m = self.values.mean(axis=(-2, -1))
        return float(m) if self.components == 1 else m

    def __add__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.grid, self.values + other.values)

    def __sub__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.grid, self.values - other.values)

    def scaled(self, c: float) -> SpectralField:
        return SpectralField(self.grid, c * self.values)


def _require_scalar(f: SpectralField, name: str):
    if f.components != 1:
        raise SpectralError(f"{name} expects a scalar field")


def _require_vector(f: SpectralField, name: str):
    if f.components != 2:
        raise SpectralError(f"{name} expects a vector field")


def velocity_coeffs(grid: Grid2D, omega_hat: np.ndarray, mean_flow=(0.0, 0.0)) -> np.ndarray:
    """Biot-Savart in coefficient space: ``u = (d_y psi, -d_x psi)``, ``psi = -lap^{-1} omega``."""
    kx, ky = grid.k
    psi_hat = omega_hat * grid.inv_k2
    u_hat = np.empty((2,) + omega_hat.shape, dtype=complex)
    u_hat[0] = 1j * ky * psi_hat
    u_hat[1] = -1j * kx * psi_hat
    u_hat[0, 0, 0] = mean_flow[0]
    u_hat[1, 0, 0] = mean_flow[1]
    return u_hat


def curl_inverse(omega: SpectralField, mean_flow=(0.0, 0.0), tol: float = 1e-12) -> SpectralField:
    """Divergence-free velocity whose curl is ``omega``.

    The zero mode of the result is set to ``mean_flow``.
    """
    _require_scalar(omega, "curl_inverse")
    mean = omega.coeffs[0, 0]
    if abs(mean) > tol:
        raise SpectralError(f"vorticity must have zero mean, got mean {mean.real:.3e}")
    return SpectralField.from_coeffs(omega.grid, velocity_coeffs(omega.grid, omega.coeffs, mean_flow))


def curl(u: SpectralField) -> SpectralField:
    """``d_x u_2 - d_y u_1``."""
    _require_vector(u, "curl")
    kx, ky = u.grid.k
    c = u.coeffs
    return SpectralField.from_coeffs(u.grid, 1j * kx * c[1] - 1j * ky * c[0])


def perp_div(g: SpectralField) -> SpectralField:
    """``grad^perp . g = d_x g_2 - d_y g_1``, the curl of a forcing field."""
    return curl(g)


def gradient(f: SpectralField) -> SpectralField:
    _require_scalar(f, "gradient")
    kx, ky = f.grid.k
    return SpectralField.from_coeffs(f.grid, np.stack([1j * kx * f.coeffs, 1j * ky * f.coeffs]))


def divergence_coeffs(u: SpectralField) -> np.ndarray:
    """``k . uhat(k)`` per mode (angular wavenumbers)."""
    _require_vector(u, "divergence_coeffs")
    kx, ky = u.grid.k
    return kx * u.coeffs[0] + ky * u.coeffs[1]


def dealiased(f: SpectralField) -> SpectralField:
    return SpectralField.from_coeffs(f.grid, f.coeffs * f.grid.dealias)


def convolve(f: SpectralField, kernel: SpectralField, tol: float = 1e-8) -> SpectralField:
    """Periodic convolution ``f * kernel`` as a product of coefficients.

    ``kernel`` must be scalar and integrate to one on the grid quadrature.
    """
    _require_scalar(kernel, "convolve kernel")
    if f.grid.n != kernel.grid.n:
        raise SpectralError("field and kernel live on different grids")
    mass = kernel.coeffs[0, 0].real
    if abs(mass - 1.0) > tol:
        raise SpectralError(f"kernel integrates to {mass:.12g}, expected 1")
    return SpectralField.from_coeffs(f.grid, f.coeffs * kernel.coeffs)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """``(sum_k (1 + |2 pi k|^2)^s |fhat(k)|^2)^(1/2)``, summed over components."""
    if not -2.0 <= s <= 3.0:
        raise SpectralError(f"Sobolev exponent must lie in [-2, 3], got {s}")
    w = (1.0 + f.grid.k2) ** s
    power = np.abs(f.coeffs) ** 2
    return float(np.sqrt(np.sum(w * power)))


# Lagrange weights on the stencil {-1, 0, 1, 2} evaluated at fractional offset t.
def _cubic_weights(t: np.ndarray) -> tuple[np.ndarray, ...]:
    return (
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    )


def interpolate_values(grid: Grid2D, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Periodic tensor-product cubic Lagrange interpolation.

    ``values`` has shape ``(..., n, n)``; ``points`` has shape ``(m, 2)``.
    Returns ``(..., m)``. Exact at grid nodes, fourth order for smooth data.
    """
    n = grid.n
    p = np.mod(np.asarray(points, dtype=float), 1.0) * n
    i = np.floor(p).astype(np.int64)
    t = p - i
    wx = _cubic_weights(t[:, 0])
    wy = _cubic_weights(t[:, 1])
    out = np.zeros(values.shape[:-2] + (p.shape[0],))
    for a in range(4):
        ix = (i[:, 0] + a - 1) % n
        row = np.zeros_like(out)
        for b in range(4):
            iy = (i[:, 1] + b - 1) % n
            row += wy[b] * values[..., ix, iy]
        out += wx[a] * row
    return out


def interpolate(f: SpectralField, point) -> np.ndarray | float:
    """Evaluate ``f`` at one torus point or an ``(m, 2)`` array of points."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    out = interpolate_values(f.grid, f.values, np.atleast_2d(pts))
    if single:
        return float(out[0]) if f.components == 1 else out[:, 0]
    return out
