"""Versioned little-endian binary checkpoints.

Every file starts with an 8-byte magic tag and a ``uint32`` format version.

* ensemble: ``n:u64, time:f64, seed:u64, step:u64`` then ``x`` (n x 2) and
  ``v`` (n x 2) as float64, rows in particle-id order.
* kinetic density: ``nx:u32, nv:u32, vmax:f64, time:f64`` then the
  ``(nx, nx, nv, nv)`` values, row-major float64.
* fluid: ``n:u32, time:f64, mean_flow:2 x f64`` then the ``(n, n)``
  nodal vorticity (row-major float64, for plotting) followed by its
  ``(n, n)`` Fourier coefficients (complex128), which restore the state
  exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fluid import FluidState
from .kinetic import KineticDensity, KineticGrid
from .particles import ParticleEnsemble
from .spectral import Grid2D

FORMAT_VERSION = 1
_ENS = b"VNSENS\x00\x00"
_KIN = b"VNSKIN\x00\x00"
_FLU = b"VNSFLU\x00\x00"
_F8 = np.dtype("<f8")
_C16 = np.dtype("<c16")


class CheckpointError(ValueError):
    pass


def _open_check(data: bytes, magic: bytes) -> int:
    if data[:8] != magic:
        raise CheckpointError(f"not a {magic.rstrip(bytes(1)).decode()} checkpoint")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    return 12


def _array(data: bytes, offset: int, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    if len(data) != offset + 8 * count:
        raise CheckpointError("checkpoint payload has the wrong length")
    return np.frombuffer(data, dtype=_F8, count=count, offset=offset).astype(float).reshape(shape)


def ensemble_bytes(e: ParticleEnsemble) -> bytes:
    order = np.argsort(e.ids, kind="stable")
    if not np.array_equal(e.ids[order], np.arange(e.n)):
        raise CheckpointError("particle ids must be a permutation of 0..n-1")
    head = _ENS + struct.pack("<IQdQQ", FORMAT_VERSION, e.n, e.time, e.seed % 2**64, e.step)
    return head + e.x[order].astype(_F8).tobytes() + e.v[order].astype(_F8).tobytes()


def ensemble_from_bytes(data: bytes) -> ParticleEnsemble:
    off = _open_check(data, _ENS)
    n, time, seed, step = struct.unpack_from("<QdQQ", data, off)
    off += struct.calcsize("<QdQQ")
    xv = _array(data, off, (2, n, 2))
    return ParticleEnsemble(xv[0], xv[1], seed=seed, time=time, step=step)


def density_bytes(F: KineticDensity) -> bytes:
    g = F.grid
    head = _KIN + struct.pack("<IIIdd", FORMAT_VERSION, g.nx, g.nv, g.vmax, F.time)
    return head + np.ascontiguousarray(F.values, dtype=_F8).tobytes()


def density_from_bytes(data: bytes) -> KineticDensity:
    off = _open_check(data, _KIN)
    nx, nv, vmax, time = struct.unpack_from("<IIdd", data, off)
    off += struct.calcsize("<IIdd")
    return KineticDensity(KineticGrid(nx, nv, vmax), _array(data, off, (nx, nx, nv, nv)), time)


def fluid_bytes(s: FluidState) -> bytes:
    head = _FLU + struct.pack("<IIddd", FORMAT_VERSION, s.grid.n, s.time, *map(float, s.mean_flow))
    body = np.ascontiguousarray(s.omega.values, dtype=_F8).tobytes()
    return head + body + np.ascontiguousarray(s.omega_hat, dtype=_C16).tobytes()


def fluid_from_bytes(data: bytes) -> FluidState:
    off = _open_check(data, _FLU)
    n, time, m1, m2 = struct.unpack_from("<Iddd", data, off)
    off += struct.calcsize("<Iddd")
    if len(data) != off + 24 * n * n:
        raise CheckpointError("checkpoint payload has the wrong length")
    coeffs = np.frombuffer(data, dtype=_C16, count=n * n, offset=off + 8 * n * n).astype(complex).reshape(n, n)
    return FluidState(Grid2D(n), coeffs, np.array([m1, m2]), time)


def save(path: str | Path, obj) -> Path:
    path = Path(path)
    if isinstance(obj, ParticleEnsemble):
        data = ensemble_bytes(obj)
    elif isinstance(obj, KineticDensity):
        data = density_bytes(obj)
    elif isinstance(obj, FluidState):
        data = fluid_bytes(obj)
    else:
        raise TypeError(f"cannot checkpoint {type(obj).__name__}")
    path.write_bytes(data)
    return path


def load(path: str | Path):
    data = Path(path).read_bytes()
    tag = data[:8]
    if tag == _ENS:
        return ensemble_from_bytes(data)
    if tag == _KIN:
        return density_from_bytes(data)
    if tag == _FLU:
        return fluid_from_bytes(data)
    raise CheckpointError(f"{path}: unrecognised checkpoint")
