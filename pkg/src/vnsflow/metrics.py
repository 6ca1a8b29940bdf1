"""Distances used to compare particle runs with the kinetic reference."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

# POT probes every installed array backend on import; only numpy is used here.
for _name in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")

import ot

from .kinetic import KineticDensity
from .particles import EmpiricalMeasure, ParticleEnsemble
from .spectral import SpectralField

MAX_EXACT_POINTS = 4096


def torus_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Geodesic distance on the flat unit torus (wrap each axis, then Euclidean)."""
    d = np.abs(np.asarray(x) - np.asarray(y)) % 1.0
    d = np.minimum(d, 1.0 - d)
    return np.sqrt(np.sum(d * d, axis=-1))


def ground_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``d_T(x, x') + |v - v'|`` for phase-space points ``(x1, x2, v1, v2)``."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return torus_distance(p[..., :2], q[..., :2]) + np.linalg.norm(p[..., 2:] - q[..., 2:], axis=-1)


def cost_matrix(P: np.ndarray, Q: np.ndarray, marginal: str = "full") -> np.ndarray:
    P, Q = np.atleast_2d(P), np.atleast_2d(Q)
    if marginal == "velocity":
        return ot.dist(P[:, -2:], Q[:, -2:], metric="euclidean")
    if marginal != "full":
        raise ValueError(f"unknown marginal {marginal!r}")
    return ground_distance(P[:, None, :], Q[None, :, :])


def _normalise(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    s = w.sum()
    if not s > 0:
        raise ValueError("weights must have positive total mass")
    return w / s


def wasserstein1_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, marginal: str = "full") -> float:
    """Exact optimal transport cost between two weighted point sets (network simplex)."""
    total = len(mu.points) + len(nu.points)
    if total > MAX_EXACT_POINTS:
        raise ValueError(
            f"combined support {total} exceeds {MAX_EXACT_POINTS}; use wasserstein1_estimate for large measures"
        )
    return _transport_cost(mu, nu, marginal)


def _transport_cost(mu: EmpiricalMeasure, nu: EmpiricalMeasure, marginal: str) -> float:
    a, b = _normalise(mu.weights), _normalise(nu.weights)
    M = cost_matrix(mu.points, nu.points, marginal)
    val = ot.emd2(a, b, M, numItermax=10_000_000, check_marginals=False)
    return max(float(val), 0.0)


def sample_density(F: KineticDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. phase-space points from the piecewise-constant density on the grid cells."""
    g = F.grid
    w = np.clip(F.values, 0.0, None).ravel()
    cdf = np.cumsum(w)
    if not cdf[-1] > 0:
        raise ValueError("density has no positive mass")
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    idx = np.minimum(idx, w.size - 1)
    i1, i2, j1, j2 = np.unravel_index(idx, F.values.shape)
    jitter = rng.random((n, 4)) - 0.5
    x = np.column_stack([g.xgrid.nodes[i1], g.xgrid.nodes[i2]]) + g.hx * jitter[:, :2]
    v = np.column_stack([g.v[j1], g.v[j2]]) + g.hv * jitter[:, 2:]
    return np.column_stack([np.mod(x, 1.0), v])


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    values: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "values": list(self.values)}


def _summarise(vals: list[float]) -> Estimate:
    a = np.array(vals)
    se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else math.nan
    return Estimate(float(a.mean()), se, tuple(float(v) for v in a))


def _points(S) -> np.ndarray:
    if isinstance(S, ParticleEnsemble):
        return np.hstack([S.x, S.v])
    if isinstance(S, EmpiricalMeasure):
        return S.points
    return np.asarray(S, dtype=float)


def wasserstein1_estimate(
    S, F: KineticDensity, samples: int = 2048, seed: int = 0, resamples: int = 8, marginal: str = "full"
) -> Estimate:
    """Mean and standard error of ``W1`` between resamples of ``S`` and draws from ``F``.

    Each resample pairs ``samples`` points drawn with replacement from the
    support of ``S`` with ``samples`` fresh i.i.d. points from ``F``.
    """
    if not 1 <= samples <= MAX_EXACT_POINTS:
        raise ValueError(f"samples must lie in 1..{MAX_EXACT_POINTS}")
    if resamples < 2:
        raise ValueError("need at least two resamples for a standard error")
    pts = _points(S)
    children = np.random.SeedSequence(seed).spawn(resamples)
    w = np.full(samples, 1.0 / samples)
    vals = []
    for ss in children:
        rng = np.random.default_rng(ss)
        a = pts[rng.integers(0, len(pts), samples)]
        b = sample_density(F, samples, rng)
        vals.append(_transport_cost(EmpiricalMeasure(a, w), EmpiricalMeasure(b, w), marginal))
    return _summarise(vals)


def monte_carlo_floor(
    F: KineticDensity, samples: int = 2048, seed: int = 0, resamples: int = 8, marginal: str = "full"
) -> Estimate:
    """The same estimator applied to two independent draws from ``F`` itself."""
    children = np.random.SeedSequence([seed, 0x5EED]).spawn(resamples)
    w = np.full(samples, 1.0 / samples)
    vals = []
    for ss in children:
        rng = np.random.default_rng(ss)
        a = sample_density(F, samples, rng)
        b = sample_density(F, samples, rng)
        vals.append(_transport_cost(EmpiricalMeasure(a, w), EmpiricalMeasure(b, w), marginal))
    return _summarise(vals)


def sup_gap(u1: SpectralField, u2: SpectralField) -> float:
    """``max_x |u1(x) - u2(x)|`` over grid nodes."""
    if u1.grid.n != u2.grid.n or u1.components != u2.components:
        raise ValueError("sup_gap needs fields on the same grid with the same number of components")
    return float((u1 - u2).sup())


def sup_gap_series(frames1, frames2) -> list[float]:
    if len(frames1) != len(frames2):
        raise ValueError("trajectories have different numbers of frames")
    out = []
    for a, b in zip(frames1, frames2):
        if abs(a.time - b.time) > 1e-9:
            raise ValueError(f"frame times differ: {a.time} vs {b.time}")
        out.append(sup_gap(a.u, b.u))
    return out


@dataclass(frozen=True)
class Rate:
    slope: float
    stderr: float
    intercept: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "intercept": self.intercept}


def fit_rate(ns, errors) -> Rate:
    """Least-squares slope of ``log(error)`` against ``log(n)``."""
    x = np.log(np.asarray(ns, dtype=float))
    e = np.asarray(errors, dtype=float)
    if len(x) < 3 or len(e) != len(x):
        raise ValueError("fit_rate needs at least three (n, error) pairs")
    if np.any(~(e > 0)):
        raise ValueError("errors must be positive to fit a rate")
    y = np.log(e)
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = len(x) - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else math.nan
    return Rate(slope, se, intercept)


def gronwall_quantity(a, b, k: float = 2.25) -> float:
    """``||u_a - u_b||^2 + ||<v>^k (F_a - F_b)||^2`` (both in L2) for two kinetic states."""
    du = a.fluid.u - b.fluid.u
    grid = du.grid
    fluid = float(grid.quad(np.sum(du.values**2, axis=0)))
    Fa, Fb = a.matter, b.matter
    g = Fa.grid
    jv = (1.0 + g.speed**2) ** k
    kin = float((jv * (Fa.values - Fb.values) ** 2).sum() * g.cell_volume)
    return fluid + kin
