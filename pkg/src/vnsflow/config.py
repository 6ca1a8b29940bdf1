"""Run and experiment configuration.

Configurations are plain JSON. Every problem is reported as a
:class:`ConfigError` naming the offending field.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .initial import InitialDensity, InitialVelocity
from .mollifier import KINDS, MAX_BETA

SYSTEMS = ("particle", "particle_cutoff", "kinetic", "kinetic_cutoff")
SPLITTINGS = ("lie", "strang")


@dataclass(frozen=True)
class KineticDims:
    nx: int | None = None
    nv: int = 64
    vmax: float | None = None


@dataclass(frozen=True)
class RunConfig:
    system: str = "kinetic"
    n: int = 32
    kinetic: KineticDims = field(default_factory=KineticDims)
    N: int = 1000
    beta: float = 0.25
    R: float | str | None = None
    sigma: float = 0.5
    nu: float = 1.0
    T: float = 0.5
    dt: float = 0.005
    seed: int = 0
    save_every: int = 10
    mollifier: dict = field(default_factory=lambda: {"kind": "vonmises_bump"})
    u0: InitialVelocity = field(default_factory=lambda: InitialVelocity("taylor_green", 1.0))
    f0: InitialDensity = field(default_factory=lambda: InitialDensity(ax=0.5, ay=0.5))
    splitting: str = "lie"
    limiter: bool = True
    alpha: float = 0.25
    noise_dt: float | None = None
    allow_zero_sigma: bool = False
    out: str | None = None

    # -- derived --------------------------------------------------------
    @property
    def is_particle(self) -> bool:
        return self.system.startswith("particle")

    @property
    def has_cutoff(self) -> bool:
        return self.system.endswith("_cutoff")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def kinetic_nx(self) -> int:
        return self.kinetic.nx or self.n

    @property
    def vmax(self) -> float:
        """Velocity half-width; defaults to five initial standard deviations past the mean."""
        if self.kinetic.vmax is not None:
            return float(self.kinetic.vmax)
        return 5.0 * self.f0.v_std + max(abs(c) for c in self.f0.v_mean)

    def with_(self, **changes) -> RunConfig:
        return validate(replace(self, **changes))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        return d

    def canonical_json(self, exclude_out: bool = True) -> str:
        d = self.to_dict()
        if exclude_out:
            d.pop("out", None)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _err(name: str, msg: str) -> ConfigError:
    return ConfigError(f"field '{name}': {msg}")


def _is_pow2(n: int) -> bool:
    return n >= 8 and n & (n - 1) == 0


def validate(c: RunConfig) -> RunConfig:
    if c.system not in SYSTEMS:
        raise _err("system", f"must be one of {SYSTEMS}, got {c.system!r}")
    if not isinstance(c.n, int) or not _is_pow2(c.n):
        raise _err("n", f"fluid grid must be a power of two >= 8, got {c.n!r}")
    if not (c.dt > 0 and math.isfinite(c.dt)):
        raise _err("dt", "must be positive")
    if not c.T > 0:
        raise _err("T", "must be positive")
    if abs(c.steps * c.dt - c.T) > 1e-9 * max(1.0, c.T):
        raise _err("T", f"T={c.T} is not a whole number of steps of dt={c.dt}")
    if c.sigma < 0:
        raise _err("sigma", "must be nonnegative")
    if c.sigma == 0 and not c.allow_zero_sigma:
        raise _err("sigma", "sigma = 0 lies outside the theory; set allow_zero_sigma to run it")
    if c.nu <= 0:
        raise _err("nu", "must be positive")
    if not isinstance(c.save_every, int) or c.save_every < 1:
        raise _err("save_every", "must be a positive integer")
    if c.splitting not in SPLITTINGS:
        raise _err("splitting", f"must be one of {SPLITTINGS}")
    if not 0 <= c.alpha < 0.5:
        raise _err("alpha", "must lie in [0, 1/2)")
    kind = c.mollifier.get("kind") if isinstance(c.mollifier, dict) else None
    if kind not in KINDS:
        raise _err("mollifier.kind", f"must be one of {KINDS}, got {kind!r}")
    if c.R is not None and c.R != "auto":
        try:
            r = float(c.R)
        except (TypeError, ValueError):
            raise _err("R", f"must be a number, 'auto' or null, got {c.R!r}") from None
        if not r > 1:
            raise _err("R", "must exceed 1")
    if c.has_cutoff and c.R is None:
        raise _err("R", "cut-off systems need R (a number or 'auto')")
    if c.is_particle:
        if not isinstance(c.N, int) or c.N < 0:
            raise _err("N", "must be a nonnegative integer")
        if not c.beta > 0:
            raise _err("beta", "must be positive")
        if c.beta > MAX_BETA:
            raise _err("beta", f"hypothesis 4 violated: need β ≤ 1/4, got beta={c.beta}")
        if not c.f0.is_product:
            raise _err("f0.v_corr", "particle runs need a product-form F0 (v_corr = 0)")
        if c.splitting == "strang":
            raise _err("splitting", "Strang splitting is available for kinetic systems only")
        if c.noise_dt is not None:
            ratio = c.dt / c.noise_dt
            if c.noise_dt <= 0 or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise _err("noise_dt", "dt must be a whole multiple of noise_dt")
    else:
        nx = c.kinetic_nx
        if nx != c.n:
            raise _err("kinetic.nx", f"must equal the fluid grid n={c.n}")
        if c.kinetic.nv < 8:
            raise _err("kinetic.nv", "need at least 8 velocity cells per axis")
        if c.vmax <= 0:
            raise _err("kinetic.vmax", "must be positive")
        if c.dt * c.vmax > 1.0 / nx * (1 + 1e-12):
            raise _err("dt", f"transport CFL: dt*vmax={c.dt * c.vmax:.4g} exceeds the cell size {1.0 / nx:.4g}")
    return c


def _build(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise _err(f"{name}.{sorted(extra)[0]}" if name else sorted(extra)[0], "unknown field")
    try:
        return cls(**data)
    except ConfigError as exc:
        raise ConfigError(f"field '{name}': {exc}") from None
    except TypeError as exc:
        raise _err(name, str(exc)) from None


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    d = dict(data)
    if "kinetic" in d:
        d["kinetic"] = _build(KineticDims, dict(d["kinetic"] or {}), "kinetic")
    if "u0" in d:
        d["u0"] = _build(InitialVelocity, dict(d["u0"]), "u0")
    if "f0" in d:
        f0 = dict(d["f0"])
        if "v_mean" in f0:
            f0["v_mean"] = tuple(f0["v_mean"])
        d["f0"] = _build(InitialDensity, f0, "f0")
    return validate(_build(RunConfig, d, ""))


def load(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


@dataclass(frozen=True)
class ExperimentPlan:
    """A sweep of particle runs compared against one kinetic reference."""

    base: RunConfig
    axis: str = "N"
    values: tuple = (250, 1000, 4000)
    seeds: tuple = tuple(range(8))
    reference: RunConfig | None = None
    w1_samples: int = 2048
    w1_resamples: int = 8

    def reference_config(self) -> RunConfig:
        """The kinetic run sharing ``u0``, ``F0``, ``sigma``, ``T`` with every particle run."""
        if self.reference is not None:
            return self.reference
        b = self.base
        system = "kinetic_cutoff" if b.has_cutoff else "kinetic"
        return validate(replace(b, system=system, R=b.R if b.has_cutoff else None))

    def run_config(self, value, seed: int) -> RunConfig:
        return validate(replace(self.base, **{self.axis: value, "seed": int(seed)}))

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "axis": self.axis,
            "values": list(self.values),
            "seeds": list(self.seeds),
            "reference": None if self.reference is None else self.reference.to_dict(),
            "w1_samples": self.w1_samples,
            "w1_resamples": self.w1_resamples,
        }


def plan_from_dict(data: dict) -> ExperimentPlan:
    if not isinstance(data, dict) or "base" not in data:
        raise ConfigError("plan must be a JSON object with a 'base' run config")
    base = from_dict(data["base"])
    if not base.is_particle:
        raise _err("base.system", "the sweep runs particle systems")
    axis = data.get("axis", "N")
    if axis not in ("N", "beta"):
        raise _err("axis", "must be 'N' or 'beta'")
    values = tuple(data.get("values", ()))
    if len(values) < 3:
        raise _err("values", "need at least 3 sweep points")
    seeds = data.get("seeds", 8)
    seeds = tuple(range(seeds)) if isinstance(seeds, int) else tuple(int(s) for s in seeds)
    if len(seeds) < 2:
        raise _err("seeds", "need at least 2 seeds per point (a standard error needs replication)")
    if len(seeds) < 8:
        raise _err("seeds", f"need at least 8 seeds per point, got {len(seeds)}")
    ref = data.get("reference")
    plan = ExperimentPlan(
        base=base,
        axis=axis,
        values=values,
        seeds=seeds,
        reference=None if ref is None else from_dict(ref),
        w1_samples=int(data.get("w1_samples", 2048)),
        w1_resamples=int(data.get("w1_resamples", 8)),
    )
    if not 1 <= plan.w1_samples <= 4096:
        raise _err("w1_samples", "must lie in 1..4096")
    if plan.w1_resamples < 8:
        raise _err("w1_resamples", "need at least 8 resamples")
    for v in values:
        plan.run_config(v, seeds[0])
    ref_cfg = plan.reference_config()
    b = plan.base
    if ref_cfg.is_particle:
        raise _err("reference.system", "the reference must be a kinetic run")
    for name in ("u0", "f0", "sigma", "T", "nu", "n"):
        if getattr(ref_cfg, name) != getattr(b, name):
            raise _err(f"reference.{name}", "must match the particle runs")
    return plan


def load_plan(path: str | Path) -> ExperimentPlan:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"plan file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return plan_from_dict(data)
