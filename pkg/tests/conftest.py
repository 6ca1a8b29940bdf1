import numpy as np
import pytest

from vnsflow.spectral import Grid2D, SpectralField


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def smooth_random_scalar(grid: Grid2D, rng, modes: int = 4) -> SpectralField:
    """Band-limited zero-mean random field (all modes within the 2/3 band for n >= 16)."""
    X, Y = grid.mesh
    out = np.zeros_like(X)
    for p in range(-modes, modes + 1):
        for q in range(-modes, modes + 1):
            if p == q == 0:
                continue
            out += rng.normal() / (1 + p * p + q * q) * np.cos(2 * np.pi * (p * X + q * Y) + rng.uniform(0, 2 * np.pi))
    return SpectralField(grid, out - out.mean())
