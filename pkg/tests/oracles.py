"""Independent brute-force oracles shared by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def torus_euclid_cost(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Ground cost by explicit loops: min over periodic images of the x part plus |v - v'|."""
    C = np.zeros((len(P), len(Q)))
    for i, p in enumerate(P):
        for j, q in enumerate(Q):
            best = np.inf
            for sx in (-1, 0, 1):
                for sy in (-1, 0, 1):
                    d = np.hypot(p[0] - q[0] + sx, p[1] - q[1] + sy)
                    best = min(best, d)
            C[i, j] = best + np.hypot(p[2] - q[2], p[3] - q[3])
    return C


def transport_by_vertex_enumeration(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> float:
    """Minimum cost over every basic feasible solution of the transportation polytope."""
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    rhs = np.concatenate([a, b])
    A, rhs = A[:-1], rhs[:-1]  # one constraint is redundant
    k = m + n - 1
    best = np.inf
    for cols in itertools.combinations(range(m * n), k):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        x = np.linalg.solve(B, rhs)
        if np.all(x >= -1e-12):
            best = min(best, float(C.ravel()[list(cols)] @ x))
    return best


def assignment_by_permutations(C: np.ndarray) -> float:
    """Uniform equal-size measures: the vertices are permutation matrices."""
    n = C.shape[0]
    return min(C[np.arange(n), list(p)].sum() for p in itertools.permutations(range(n))) / n


def brute_min_over_radius(a: float, b: float, p: float, q: float, lo=1e-4, hi=1e4, num=400_001) -> float:
    r = np.geomspace(lo, hi, num)
    return float(np.min(a * r**p + b * r ** (-q)))
