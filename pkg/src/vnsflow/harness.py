"""Experiment orchestration behind the command line.

Everything here writes plain files: JSON for summaries and reports, CSV for
time series, and the versioned binary checkpoints for frames. Reports carry
``REPORT_VERSION``; bump it whenever a key changes meaning or disappears.

Report history
    1   first layout (per-point W1 full/velocity, sup-gap, floors, rates,
        marginal inequality tally of the reference frames)
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ExperimentPlan, RunConfig
from .coupled import estimate_Ku, run
from .errors import ConfigError, NumericalAbort
from .fluid import FluidState
from .kinetic import KineticGrid
from .marginals import check_marginals
from .metrics import (
    fit_rate,
    monte_carlo_floor,
    sup_gap_series,
    wasserstein1_estimate,
)
from .mollifier import (
    MAX_BETA,
    MollifierError,
    check_hypotheses,
    make_mollifier_pair,
    scale_for,
)
from .particles import SamplingError
from .spectral import Grid2D

log = logging.getLogger(__name__)

REPORT_VERSION = 1


# -- stored trajectories ----------------------------------------------------


@dataclass
class StoredRun:
    """Frames of a finished run read back from its output directory."""

    path: Path
    config: RunConfig
    summary: dict
    fluid_frames: list[FluidState]
    matter_paths: list[Path]

    def matter(self, i: int = -1):
        return checkpoint.load(self.matter_paths[i])

    @property
    def final_matter(self):
        return self.matter(-1)


def load_run(path: str | Path) -> StoredRun:
    from .config import from_dict

    path = Path(path)
    try:
        cfg = from_dict(json.loads((path / "config.json").read_text()))
        summary = json.loads((path / "summary.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{path} is not a run directory ({exc.filename} missing)") from None
    if summary.get("status") != "ok":
        raise ConfigError(f"{path}: run did not finish (status {summary.get('status')!r})")
    frames = path / "frames"
    fluid = [checkpoint.load(p) for p in sorted(frames.glob("fluid_*.bin"))]
    matter = sorted(frames.glob("matter_*.bin"))
    return StoredRun(path, cfg, summary, fluid, matter)


def cached_run(cfg: RunConfig, cache: str | Path) -> StoredRun:
    """Run ``cfg`` once per content hash under ``cache``; later calls read the stored frames."""
    d = Path(cache) / cfg.content_hash()[:16]
    summary = d / "summary.json"
    if summary.exists():
        try:
            s = json.loads(summary.read_text())
        except json.JSONDecodeError:
            s = {}
        if s.get("status") == "ok" and s.get("config_hash") == cfg.content_hash():
            log.info("reusing cached run %s", d)
            return load_run(d)
    run(cfg, out=d)
    return load_run(d)


# -- convergence sweeps -------------------------------------------------------


def _point_seed(seed: int, index: int) -> int:
    return 1000 * (index + 1) + int(seed)


def _particle_job(args) -> dict:
    cfg, ref_dir, out_dir, index, samples, resamples = args
    ref = load_run(ref_dir)
    FT = ref.final_matter
    try:
        traj = run(cfg, out=out_dir)
    except (NumericalAbort, SamplingError) as exc:
        raise NumericalAbort(f"{exc} (at {cfg.system} N={cfg.N} beta={cfg.beta} seed={cfg.seed})") from exc
    e = traj.final.matter
    ws = _point_seed(cfg.seed, index)
    w_full = wasserstein1_estimate(e, FT, samples, seed=ws, resamples=resamples)
    w_vel = wasserstein1_estimate(e, FT, samples, seed=ws, resamples=resamples, marginal="velocity")
    gaps = sup_gap_series(traj.fluid_frames, ref.fluid_frames)
    return {
        "seed": cfg.seed,
        "w1_full": w_full.mean,
        "w1_velocity": w_vel.mean,
        "sup_gap": max(gaps),
        "sup_gap_final": gaps[-1],
        "chi_one_fraction": traj.chi_one_fraction,
        "sup_u": traj.sup_u(),
        "checksum": traj.checksums["trajectory"],
    }


def _mean_se(vals) -> tuple[float, float]:
    a = np.asarray(vals, dtype=float)
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else math.nan


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def _rate(ns, errs):
    if any(not e > 0 for e in errs):
        return None
    return fit_rate(ns, errs).to_dict()


def check_reference_marginals(ref: StoredRun) -> dict:
    """Run the marginal inequalities on every saved density frame of a kinetic run."""
    checks = violations = 0
    worst = {}
    for i in range(len(ref.matter_paths)):
        F = ref.matter(i)
        for c in check_marginals(F):
            checks += 1
            violations += not c.ok
            key = c.item.split("[")[0]
            ratio = c.lhs / c.rhs if c.rhs > 0 else math.inf
            worst[key] = max(worst.get(key, 0.0), ratio)
    return {"frames": len(ref.matter_paths), "checks": checks, "violations": violations, "max_lhs_over_rhs": worst}


def converge(plan: ExperimentPlan, out: str | Path, cache: str | Path | None = None, jobs: int = 1) -> dict:
    """Kinetic reference once, then every particle run of the plan; returns the report dictionary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ref_cfg = plan.reference_config()
    ref = cached_run(ref_cfg, cache if cache is not None else out / "reference_cache")
    base = plan.base
    if (ref_cfg.dt, ref_cfg.save_every) != (base.dt, base.save_every):
        raise ConfigError("field 'reference': dt and save_every must match the particle runs so frames align")
    FT = ref.final_matter
    floor_full = monte_carlo_floor(FT, plan.w1_samples, seed=0, resamples=plan.w1_resamples)
    floor_vel = monte_carlo_floor(FT, plan.w1_samples, seed=0, resamples=plan.w1_resamples, marginal="velocity")

    jobs_args = []
    for i, value in enumerate(plan.values):
        for s in plan.seeds:
            cfg = plan.run_config(value, s)
            run_dir = out / "runs" / f"{plan.axis}={value}" / f"seed={s}"
            jobs_args.append((cfg, ref.path, run_dir, i, plan.w1_samples, plan.w1_resamples))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_particle_job, jobs_args))
    else:
        results = [_particle_job(a) for a in jobs_args]

    points = []
    k = 0
    for value in plan.values:
        rs = results[k : k + len(plan.seeds)]
        k += len(plan.seeds)
        wf, wf_se = _mean_se([r["w1_full"] for r in rs])
        wv, wv_se = _mean_se([r["w1_velocity"] for r in rs])
        g, g_se = _mean_se([r["sup_gap"] for r in rs])
        points.append(
            {
                plan.axis: value,
                "w1_full": {"mean": wf, "stderr": wf_se},
                "w1_velocity": {"mean": wv, "stderr": wv_se},
                "w1_full_excess": wf - floor_full.mean,
                "w1_velocity_excess": wv - floor_vel.mean,
                "sup_gap": {"mean": g, "stderr": g_se},
                "chi_one_fraction_min": min(r["chi_one_fraction"] for r in rs),
                "sup_u_max": max(r["sup_u"] for r in rs),
                "runs": rs,
            }
        )
    xs = list(plan.values)
    excess_full = [p["w1_full_excess"] for p in points]
    excess_vel = [p["w1_velocity_excess"] for p in points]
    gaps = [p["sup_gap"]["mean"] for p in points]
    report = {
        "version": REPORT_VERSION,
        "axis": plan.axis,
        "plan": plan.to_dict(),
        "reference": {
            "config_hash": ref_cfg.content_hash(),
            "path": str(ref.path),
            "checksum": ref.summary["checksums"]["trajectory"],
            "sup_u": ref.summary["sup_u"],
        },
        "floor": {"full": floor_full.to_dict(), "velocity": floor_vel.to_dict()},
        "points": points,
        "rates": {
            "w1_full_excess": _rate(xs, excess_full),
            "w1_velocity_excess": _rate(xs, excess_vel),
            "sup_gap": _rate(xs, gaps),
        },
        "decreasing": {
            "w1_full_excess": _strictly_decreasing(excess_full),
            "w1_velocity_excess": _strictly_decreasing(excess_vel),
            "sup_gap": _strictly_decreasing(gaps),
        },
        "marginal_inequalities": check_reference_marginals(ref),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / "report.txt").write_text(report_table(report) + "\n")
    return report


def report_table(report: dict) -> str:
    axis = report["axis"]
    fl = report["floor"]
    lines = [
        f"Monte-Carlo floor: W1 full {fl['full']['mean']:.4g} ± {fl['full']['stderr']:.2g}, "
        f"velocity {fl['velocity']['mean']:.4g} ± {fl['velocity']['stderr']:.2g}",
        f"{axis:>8} {'W1 full':>20} {'excess':>10} {'W1 vel':>20} {'excess':>10} {'sup gap':>20} {'chi=1':>7}",
    ]
    for p in report["points"]:
        wf, wv, g = p["w1_full"], p["w1_velocity"], p["sup_gap"]
        lines.append(
            f"{p[axis]:>8} {wf['mean']:>11.4g} ± {wf['stderr']:<6.2g} {p['w1_full_excess']:>10.4g} "
            f"{wv['mean']:>11.4g} ± {wv['stderr']:<6.2g} {p['w1_velocity_excess']:>10.4g} "
            f"{g['mean']:>11.4g} ± {g['stderr']:<6.2g} {p['chi_one_fraction_min']:>7.3f}"
        )
    for name, r in report["rates"].items():
        txt = "n/a (nonpositive values)" if r is None else f"{r['slope']:+.3f} ± {r['stderr']:.3f}"
        lines.append(f"rate {name}: {txt}; strictly decreasing: {report['decreasing'][name]}")
    mi = report.get("marginal_inequalities")
    if mi:
        lines.append(f"marginal inequalities: {mi['checks']} checks on {mi['frames']} frames, {mi['violations']} violations")
    return "\n".join(lines)


# -- hypothesis validation ------------------------------------------------------


def _m6_of_profile(cfg: RunConfig, vmax: float, hv: float) -> float:
    f0 = cfg.f0
    nv = max(8, int(round(2 * vmax / hv)))
    h = 2 * vmax / nv
    c = -vmax + h * (np.arange(nv) + 0.5)
    if f0.is_product:
        g = np.outer(f0.v_cell_profile(c - f0.v_mean[0], h), f0.v_cell_profile(c - f0.v_mean[1], h))
    else:
        V1, V2 = np.meshgrid(c, c, indexing="ij")
        g = f0.velocity_density(V1, V2)
    grid = KineticGrid(8, nv, vmax)
    return float((g * grid.moment_weights(6)).sum() * h * h * f0.mass)


def m6_probe(cfg: RunConfig, doublings: int = 3, growth_tol: float = 1e-3) -> dict:
    """``M6 F0`` on velocity boxes of half-width ``vmax * 2^j`` at fixed cell size.

    A finite sixth moment settles as the box grows; a heavy tail keeps it
    growing, which is what gets flagged.
    """
    hv = 2.0 * cfg.vmax / cfg.kinetic.nv
    vals = [_m6_of_profile(cfg, cfg.vmax * 2**j, hv) for j in range(doublings + 1)]
    growth = [b / a - 1.0 if a > 0 else math.inf for a, b in zip(vals, vals[1:])]
    return {"vmax": [cfg.vmax * 2**j for j in range(doublings + 1)], "M6": vals, "growth": growth,
            "ok": bool(abs(growth[-1]) <= growth_tol)}


def spectral_decay(cfg: RunConfig, band: float = 1.0 / 3.0, tol: float = 1e-8) -> dict:
    """Fraction of ``u0`` energy above ``band * n / 2`` in wavenumber; small means smooth at this resolution."""
    grid = Grid2D(cfg.n)
    u = FluidState.from_vorticity(cfg.u0.vorticity(grid)).u
    power = np.zeros((cfg.n, cfg.n))
    for comp in range(2):
        power += np.abs(np.fft.fft2(u.values[comp])) ** 2
    k = np.fft.fftfreq(cfg.n, 1.0 / cfg.n)
    K = np.hypot(*np.meshgrid(k, k, indexing="ij"))
    total = power.sum()
    frac = float(power[K > 2.0 * band * cfg.n / 2.0].sum() / total) if total > 0 else 0.0
    return {"high_band_energy_fraction": frac, "ok": frac <= tol}


def validate_hypotheses(raw: dict, theta1_unit=None) -> dict:
    """Pass/fail per hypothesis for a raw config dictionary (report only, never raises on a failed check)."""
    from .config import from_dict

    raw = dict(raw)
    beta = float(raw.get("beta", RunConfig.beta))
    checks = {"beta": {"value": beta, "ok": 0 < beta <= MAX_BETA,
                       "detail": f"hypothesis 4 needs β ≤ 1/4, got beta={beta}"}}
    if not checks["beta"]["ok"]:
        raw["beta"] = MAX_BETA
    cfg = from_dict(raw)
    n_for_eps = max(cfg.N, 1)
    try:
        eps = scale_for(n_for_eps, min(beta, MAX_BETA) if beta > 0 else MAX_BETA)
        pair = make_mollifier_pair(min(eps, 0.5), cfg.mollifier.get("kind", "vonmises_bump"), beta, theta1_unit=theta1_unit)
        checks["mollifier"] = {"ok": True, "detail": check_hypotheses(pair)}
    except MollifierError as exc:
        checks["mollifier"] = {"ok": False, "detail": str(exc)}
    checks["F0_M6"] = m6_probe(cfg)
    checks["u0_smoothness"] = spectral_decay(cfg)
    return {"version": REPORT_VERSION, "checks": checks, "ok": all(c["ok"] for c in checks.values())}


# -- trajectory comparison ------------------------------------------------------


def compare_runs(a: str | Path, b: str | Path) -> dict:
    ra, rb = load_run(a), load_run(b)
    gaps = sup_gap_series(ra.fluid_frames, rb.fluid_frames)
    l2 = []
    for fa, fb in zip(ra.fluid_frames, rb.fluid_frames):
        d = fa.u - fb.u
        l2.append(math.sqrt(float(fa.grid.quad((d.values**2).sum(axis=0)))))
    return {
        "version": REPORT_VERSION,
        "a": str(ra.path),
        "b": str(rb.path),
        "t": [f.time for f in ra.fluid_frames],
        "sup_gap": gaps,
        "l2_gap": l2,
        "max_sup_gap": max(gaps),
        "identical_checksums": ra.summary["checksums"]["trajectory"] == rb.summary["checksums"]["trajectory"],
    }


def gap_csv(cmp: dict) -> str:
    rows = ["t,sup_gap,l2_gap"]
    rows += [f"{t!r},{g!r},{l!r}" for t, g, l in zip(cmp["t"], cmp["sup_gap"], cmp["l2_gap"])]
    return "\n".join(rows) + "\n"


def estimate_ku_report(cfg: RunConfig, out: str | Path | None = None) -> dict:
    est = estimate_Ku(cfg)
    rep = {"version": REPORT_VERSION, "K_u": est.K_u, "R": est.K_u + 1.0, "R_used": est.R_used, "attempts": est.attempts,
           "config_hash": cfg.content_hash()}
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "ku.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return rep


__all__ = [
    "REPORT_VERSION",
    "StoredRun",
    "cached_run",
    "check_reference_marginals",
    "compare_runs",
    "converge",
    "estimate_ku_report",
    "gap_csv",
    "load_run",
    "m6_probe",
    "report_table",
    "spectral_decay",
    "validate_hypotheses",
]
