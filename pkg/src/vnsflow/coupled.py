"""Time stepping of the four coupled systems.

``particle`` / ``particle_cutoff`` couple Navier-Stokes to an SDE ensemble
through mollified drag; ``kinetic`` / ``kinetic_cutoff`` couple it to the
Vlasov-Fokker-Planck density. Systems without ``_cutoff`` run with
``chi = 1``.

Each step (Lie splitting, fluid then matter) freezes ``u`` and ``chi`` at the
start, forms the drag, advances the fluid, then advances the matter with the
same frozen velocity. ``splitting = "strang"`` (kinetic only) brackets the
fluid step with two half steps of the density.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig, validate
from .errors import ConfigError, NumericalAbort
from .fluid import CutoffRule, FluidState, ns_step
from .kinetic import (
    BOUNDARY_WARN,
    KineticDensity,
    KineticGrid,
    drag_force_field,
    first_moment,
    moments,
    vfp_step,
)
from .mollifier import MollifierPair, make_mollifier_pair, scale_for
from .particles import (
    ParticleEnsemble,
    SamplingError,
    _kernel_sum,
    deposit_drag,
    mollified_density,
    position_density,
    sample_initial,
    step_ensemble,
)
from .spectral import (
    TWO_PI,
    Grid2D,
    SpectralField,
    convolve,
    interpolate_values,
    sobolev_norm,
)

log = logging.getLogger(__name__)

COLUMNS = (
    "t", "energy", "enstrophy", "u_inf", "h_norm", "chi", "M2", "M4", "M6",
    "F_L1", "F_L2", "F_L4", "F_inf", "m0_L2", "m1_L2", "residual",
)
SUMMARY_VERSION = 1


@dataclass
class DiagnosticsRecord:
    """Per-step scalar diagnostics; ``residual`` is the energy-balance defect of the preceding step."""

    rows: list[dict] = field(default_factory=list)

    def append(self, row: dict):
        if self.rows and row["t"] <= self.rows[-1]["t"]:
            raise ValueError("diagnostic time stamps must increase")
        self.rows.append({c: float(row.get(c, math.nan)) for c in COLUMNS})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([repr(r[c]) for c in COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> DiagnosticsRecord:
        rd = csv.DictReader(io.StringIO(text))
        rec = cls()
        rec.rows = [{c: float(r[c]) for c in COLUMNS} for r in rd]
        return rec


@dataclass
class CoupledState:
    fluid: FluidState
    matter: ParticleEnsemble | KineticDensity
    mollifier: MollifierPair | None
    cutoff: CutoffRule
    step: int = 0

    @property
    def time(self) -> float:
        return self.fluid.time


@dataclass
class Trajectory:
    config: RunConfig
    final: CoupledState
    diagnostics: DiagnosticsRecord
    fluid_frames: list[FluidState]
    matter_frames: list
    chi: list[float]
    checksums: dict
    R: float

    @property
    def chi_one_fraction(self) -> float:
        return float(np.mean(np.array(self.chi) == 1.0)) if self.chi else 1.0

    def sup_u(self) -> float:
        return float(np.nanmax(self.diagnostics.column("u_inf")))


# -- set-up ---------------------------------------------------------------


def kinetic_grid(cfg: RunConfig) -> KineticGrid:
    return KineticGrid(cfg.kinetic_nx, cfg.kinetic.nv, cfg.vmax)


def initial_state(cfg: RunConfig, R: float = math.inf) -> CoupledState:
    grid = Grid2D(cfg.n)
    fluid = FluidState.from_vorticity(cfg.u0.vorticity(grid))
    cutoff = CutoffRule(R if cfg.has_cutoff else math.inf)
    if cfg.is_particle:
        if cfg.N == 0:
            return CoupledState(fluid, sample_initial(0, cfg.f0, cfg.seed), None, cutoff)
        eps = scale_for(cfg.N, cfg.beta)
        m = make_mollifier_pair(eps, cfg.mollifier["kind"], cfg.beta)
        if m.eps < grid.h:
            raise ConfigError(f"field 'n': mollifier scale {m.eps:.3g} is below one grid cell {grid.h:.3g}; refine the grid")
        return CoupledState(fluid, sample_initial(cfg.N, cfg.f0, cfg.seed), m, cutoff)
    return CoupledState(fluid, KineticDensity.from_initial(kinetic_grid(cfg), cfg.f0), None, cutoff)


def perturbed_state(state: CoupledState, delta: float) -> CoupledState:
    """Kinetic start shifted by ``delta`` in L2, both in ``u`` and in ``F``.

    The velocity gets a divergence-free single-mode shear and the density a
    relative modulation ``F (1 + c cos 2pi(x + y) v1)``, each scaled to L2
    norm ``delta``. The modulation has zero mass, so ``F`` stays a
    probability density as long as ``c |v1| < 1`` on the box.
    """
    if not isinstance(state.matter, KineticDensity):
        raise TypeError("perturbed_state works on kinetic states")
    fl = state.fluid
    grid = fl.grid
    X, Y = grid.mesh
    w = -TWO_PI * np.cos(TWO_PI * (X + 2 * Y))
    du = FluidState.from_vorticity(SpectralField(grid, w)).u
    scale_u = delta / math.sqrt(grid.quad(np.sum(du.values**2, axis=0)))
    fluid = FluidState.from_vorticity(SpectralField(grid, fl.omega.values + scale_u * w), fl.mean_flow, fl.time)

    F = state.matter
    g = F.grid
    xs = g.xgrid.nodes
    V1, _ = g.vmesh
    shape = np.cos(TWO_PI * (xs[:, None] + xs[None, :]))[:, :, None, None] * V1[None, None]
    dF = F.values * shape
    c = delta / math.sqrt(float((dF**2).sum() * g.cell_volume))
    if c * g.vmax >= 1.0:
        raise ValueError(f"delta={delta} is too large to keep the density nonnegative")
    matter = KineticDensity(g, F.values + c * dF)
    return CoupledState(fluid, matter, state.mollifier, state.cutoff, state.step)


# -- one step -------------------------------------------------------------


def _u_eps(state: CoupledState) -> SpectralField:
    grid = state.fluid.grid
    return convolve(state.fluid.u, state.mollifier.theta0_field(grid))


def _chi(state: CoupledState) -> float:
    return state.cutoff(state.fluid.u.sup())


def coupled_step(state: CoupledState, cfg: RunConfig) -> tuple[CoupledState, dict]:
    """Advance one ``dt``; also returns the drag-work terms at the step start."""
    dt, sigma = cfg.dt, cfg.sigma
    chi = _chi(state)
    u = state.fluid.u
    try:
        if cfg.is_particle and state.matter.n == 0:
            fluid = ns_step(state.fluid, None, dt, cfg.nu)
            matter = step_ensemble(state.matter, np.zeros((0, 2)), chi, dt, sigma)
        elif cfg.is_particle:
            e = state.matter
            ue = interpolate_values(state.fluid.grid, _u_eps(state).values, e.x).T
            drag = deposit_drag(e, ue, chi, state.mollifier, state.fluid.grid)
            fluid = ns_step(state.fluid, drag, dt, cfg.nu)
            substeps = 1 if cfg.noise_dt is None else int(round(dt / cfg.noise_dt))
            matter = step_ensemble(e, ue, chi, dt, sigma, substeps)
        elif cfg.splitting == "lie":
            drag = drag_force_field(state.matter, u, chi)
            fluid = ns_step(state.fluid, drag, dt, cfg.nu)
            matter = vfp_step(state.matter, u, chi, dt, sigma, limit=cfg.limiter)
        else:
            half = vfp_step(state.matter, u, chi, 0.5 * dt, sigma, limit=cfg.limiter)
            drag = drag_force_field(half, u, chi)
            fluid = ns_step(state.fluid, drag, dt, cfg.nu)
            chi_new = state.cutoff(fluid.u.sup())
            matter = vfp_step(half, fluid.u, chi_new, 0.5 * dt, sigma, limit=cfg.limiter)
    except NumericalAbort as exc:
        if exc.step is None:
            raise NumericalAbort(str(exc), step=state.step, subsystem=exc.subsystem) from exc
        raise
    return replace(state, fluid=fluid, matter=matter, step=state.step + 1), {"chi": chi}


# -- diagnostics ----------------------------------------------------------


def _balance_terms(state: CoupledState, cfg: RunConfig, chi: float) -> tuple[float, float]:
    """Total energy and the instantaneous rate ``nu |grad u|^2 + D - sigma^2 M0``."""
    fl = state.fluid
    u = fl.u
    if cfg.is_particle:
        e = state.matter
        if e.n == 0:
            return fl.energy(), cfg.nu * fl.enstrophy()
        ue = interpolate_values(fl.grid, _u_eps(state).values, e.x).T
        D = float(np.mean(chi * np.sum(ue * ue, axis=1) - 2 * chi * np.sum(ue * e.v, axis=1) + np.sum(e.v**2, axis=1)))
        return fl.energy() + e.kinetic_energy(), cfg.nu * fl.enstrophy() + D - cfg.sigma**2
    F = state.matter
    m0, M0 = moments(F, 0)
    m1 = first_moment(F)
    _, M2 = moments(F, 2)
    q = fl.grid.quad
    D = chi * q(np.sum(u.values**2, axis=0) * m0) - 2 * chi * q(np.sum(u.values * m1, axis=0)) + M2
    return fl.energy() + 0.5 * M2, cfg.nu * fl.enstrophy() + D - cfg.sigma**2 * M0


def _diag_row(state: CoupledState, cfg: RunConfig, chi: float, frame: bool) -> dict:
    fl = state.fluid
    u = fl.u
    row = {
        "t": state.time,
        "enstrophy": fl.enstrophy(),
        "u_inf": u.sup(),
        "h_norm": sobolev_norm(u, 1.0 + 2.0 * cfg.alpha),
        "chi": chi,
    }
    if cfg.is_particle:
        e = state.matter
        for k in (2, 4, 6):
            row[f"M{k}"] = e.moment(k)
        grid, m = fl.grid, state.mollifier
        if e.n:
            row["m0_L2"] = math.sqrt(grid.quad(position_density(e, m, grid).values ** 2))
            m1 = np.stack([_kernel_sum(m, grid, e.x, e.v[:, i] / e.n) for i in (0, 1)])
            row["m1_L2"] = math.sqrt(grid.quad(np.sum(m1**2, axis=0)))
        if frame and e.n:
            try:
                FN = mollified_density(e, m, kinetic_grid(cfg))
                row.update({"F_L1": FN.norm(1), "F_L2": FN.norm(2), "F_L4": FN.norm(4), "F_inf": FN.norm(np.inf)})
            except SamplingError as exc:
                log.info("F^N norms skipped at t=%.4g: %s", state.time, exc)
    else:
        F = state.matter
        for k in (2, 4, 6):
            row[f"M{k}"] = moments(F, k)[1]
        row.update({"F_L1": F.norm(1), "F_L2": F.norm(2), "F_L4": F.norm(4), "F_inf": F.norm(np.inf)})
        m0, _ = moments(F, 0)
        m1 = first_moment(F)
        row["m0_L2"] = math.sqrt(fl.grid.quad(m0**2))
        row["m1_L2"] = math.sqrt(fl.grid.quad(np.sum(m1**2, axis=0)))
    return row


# -- driver ---------------------------------------------------------------


def resolve_R(cfg: RunConfig) -> float:
    """Numeric cut-off radius: ``inf`` without cut-off, ``K_u + 1`` for ``"auto"``."""
    if not cfg.has_cutoff:
        return math.inf
    if cfg.R == "auto":
        return estimate_Ku(cfg).K_u + 1.0
    return float(cfg.R)


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run(
    cfg: RunConfig,
    out: str | Path | None = None,
    keep_matter_frames: bool = False,
    on_frame: Callable[[CoupledState], None] | None = None,
    R: float | None = None,
    initial: CoupledState | None = None,
) -> Trajectory:
    """Integrate ``cfg`` to ``T``; write artifacts to ``out`` when given.

    ``initial`` replaces the state built from ``cfg.u0`` and ``cfg.f0`` (used
    for perturbed starts); the config hash then no longer identifies the run.
    """
    cfg = validate(cfg)
    R = resolve_R(cfg) if R is None else R
    state = initial_state(cfg, R) if initial is None else initial
    out = Path(out) if out is not None else (Path(cfg.out) if cfg.out else None)
    if out is not None:
        (out / "frames").mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

    diag = DiagnosticsRecord()
    traj_hash = hashlib.sha256()
    fluid_frames, matter_frames, chis = [], [], []

    def save_frame(s: CoupledState):
        fb = checkpoint.fluid_bytes(s.fluid)
        mb = checkpoint.ensemble_bytes(s.matter) if cfg.is_particle else checkpoint.density_bytes(s.matter)
        traj_hash.update(fb)
        traj_hash.update(mb)
        fluid_frames.append(s.fluid)
        if keep_matter_frames:
            matter_frames.append(s.matter)
        if out is not None:
            (out / "frames" / f"fluid_{s.step:06d}.bin").write_bytes(fb)
            (out / "frames" / f"matter_{s.step:06d}.bin").write_bytes(mb)
        if on_frame is not None:
            on_frame(s)

    nsteps = cfg.steps
    chi = _chi(state)
    E_prev, Q_prev = _balance_terms(state, cfg, chi)
    row = _diag_row(state, cfg, chi, frame=True)
    row["energy"] = E_prev
    diag.append(row)
    save_frame(state)
    warned = False
    try:
        for k in range(nsteps):
            state, info = coupled_step(state, cfg)
            chis.append(info["chi"])
            chi = _chi(state)
            frame = state.step % cfg.save_every == 0 or state.step == nsteps
            if not cfg.is_particle and not warned:
                bm = state.matter.boundary_mass()
                if bm > BOUNDARY_WARN:
                    log.warning("boundary-layer mass %.3e at t=%.4g exceeds %.0e; consider a larger vmax", bm, state.time, BOUNDARY_WARN)
                    warned = True
            E, Q = _balance_terms(state, cfg, chi)
            row = _diag_row(state, cfg, chi, frame)
            row["energy"] = E
            row["residual"] = (E - E_prev) / cfg.dt + 0.5 * (Q + Q_prev)
            diag.append(row)
            E_prev, Q_prev = E, Q
            if frame:
                save_frame(state)
    except NumericalAbort as exc:
        if out is not None:
            (out / "diagnostics.csv").write_text(diag.to_csv())
            summary = {"version": SUMMARY_VERSION, "status": "aborted", "error": str(exc),
                       "step": exc.step, "subsystem": exc.subsystem, "config_hash": cfg.content_hash()}
            (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        raise

    csv_text = diag.to_csv()
    checksums = {
        "trajectory": traj_hash.hexdigest(),
        "diagnostics": _sha(csv_text.encode()),
        "final_fluid": _sha(checkpoint.fluid_bytes(state.fluid)),
        "final_matter": _sha(
            checkpoint.ensemble_bytes(state.matter) if cfg.is_particle else checkpoint.density_bytes(state.matter)
        ),
    }
    traj = Trajectory(cfg, state, diag, fluid_frames, matter_frames, chis, checksums, R)
    if out is not None:
        (out / "diagnostics.csv").write_text(csv_text)
        (out / "summary.json").write_text(json.dumps(summary_dict(traj), indent=2, sort_keys=True) + "\n")
    return traj


def summary_dict(traj: Trajectory) -> dict:
    d = traj.diagnostics
    res = d.column("residual")[1:]
    return {
        "version": SUMMARY_VERSION,
        "status": "ok",
        "system": traj.config.system,
        "config_hash": traj.config.content_hash(),
        "steps": traj.final.step,
        "final_time": traj.final.time,
        "R": None if math.isinf(traj.R) else traj.R,
        "chi_min": float(min(traj.chi)) if traj.chi else 1.0,
        "chi_one_fraction": traj.chi_one_fraction,
        "sup_u": traj.sup_u(),
        "final": d.rows[-1],
        "mean_abs_residual": float(np.mean(np.abs(res))) if res.size else 0.0,
        "checksums": traj.checksums,
    }


# -- cut-off calibration and energy bookkeeping ----------------------------


@dataclass
class KuEstimate:
    K_u: float
    R_used: float
    attempts: int
    trajectory: Trajectory


def estimate_Ku(cfg: RunConfig, R0: float | None = None, max_doublings: int = 4, **run_kwargs) -> KuEstimate:
    """``sup_t ||u_t||_inf`` of the kinetic run with a cut-off that never acts.

    Starts from ``R0`` (default ``2 (||u0||_inf + 1)``) and doubles ``R``
    whenever ``chi < 1`` occurs, at most ``max_doublings`` times.
    """
    kcfg = validate(replace(cfg, system="kinetic_cutoff", R=cfg.R if isinstance(cfg.R, (int, float)) else 1e9))
    if R0 is None:
        u0 = FluidState.from_vorticity(cfg.u0.vorticity(Grid2D(cfg.n))).u.sup()
        R0 = 2.0 * (u0 + 1.0)
    R = float(R0)
    for attempt in range(max_doublings + 1):
        traj = run(kcfg, R=R, **run_kwargs)
        if all(c == 1.0 for c in traj.chi) and _chi(traj.final) == 1.0:
            return KuEstimate(traj.sup_u(), R, attempt + 1, traj)
        log.info("cut-off active with R=%.4g; doubling", R)
        R *= 2.0
    raise NumericalAbort(f"cut-off still active after {max_doublings} doublings (R={R / 2:.4g})", subsystem="estimate_Ku")


def energy_report(trajs: Trajectory | list[Trajectory]) -> dict:
    """Residuals of the energy balance per step; averaged across runs (seeds) when a list is given."""
    trajs = trajs if isinstance(trajs, list) else [trajs]
    R = np.array([t.diagnostics.column("residual")[1:] for t in trajs])
    per_run = R.mean(axis=1)
    mean_series = R.mean(axis=0)
    n = len(trajs)
    stderr = float(per_run.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return {
        "runs": n,
        "dt": trajs[0].config.dt,
        "mean_residual": float(per_run.mean()),
        "stderr": stderr,
        "mean_abs_residual": float(np.mean(np.abs(mean_series))),
        "max_abs_residual": float(np.max(np.abs(mean_series))),
        "series": mean_series.tolist(),
    }
