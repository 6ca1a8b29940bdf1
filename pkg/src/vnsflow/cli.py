"""``vnsflow`` command line.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import runtime

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


def _common(p: argparse.ArgumentParser, config_help: str) -> None:
    p.add_argument("--config", required=True, help=config_help)
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the seed (u64)")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${runtime.ENV_VAR} or all cores)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vnsflow", description="Fluid-particle and fluid-kinetic simulations.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one configuration")
    _common(p, "run config JSON")

    for name, hlp in (("converge", "N-sweep against a kinetic reference"), ("sweep-beta", "beta-sweep against a kinetic reference")):
        p = sub.add_parser(name, help=hlp)
        _common(p, "experiment plan JSON")
        p.add_argument("--cache", help="directory of cached kinetic references (default OUT/reference_cache)")
        p.add_argument("--jobs", type=int, default=1, help="parallel particle runs")

    p = sub.add_parser("validate", help="check the modelling hypotheses on a config")
    _common(p, "run config JSON")

    p = sub.add_parser("estimate-ku", help="sup-norm bound of the kinetic velocity and the cut-off R it implies")
    _common(p, "run config JSON")

    p = sub.add_parser("compare", help="gap time series between two run directories")
    p.add_argument("runs", nargs=2, metavar="RUN_DIR")
    p.add_argument("--out", help="write the gap series CSV here")
    p.add_argument("--threads", type=int)
    return ap


def _read_json(path: str) -> dict:
    from .errors import ConfigError

    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _simulate(args) -> int:
    from .config import from_dict
    from .coupled import run, summary_dict

    raw = _read_json(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = from_dict(raw)
    out = args.out or cfg.out or f"runs/{cfg.content_hash()[:12]}"
    cfg = replace(cfg, out=str(out))
    traj = run(cfg, out=out)
    s = summary_dict(traj)
    print(f"{cfg.system}: {s['steps']} steps to t={s['final_time']:.6g}; sup|u|={s['sup_u']:.6g}; "
          f"chi=1 on {100 * s['chi_one_fraction']:.1f}% of steps")
    print(f"trajectory sha256 {s['checksums']['trajectory']}")
    print(f"artifacts in {out}")
    return EXIT_OK


def _converge(args, axis: str) -> int:
    from .config import plan_from_dict
    from .harness import converge, report_table

    raw = _read_json(args.config)
    raw.setdefault("axis", axis)
    if raw["axis"] != axis:
        from .errors import ConfigError

        raise ConfigError(f"field 'axis': this subcommand sweeps {axis}, plan says {raw['axis']!r}")
    plan = plan_from_dict(raw)
    if args.seed is not None:
        plan = replace(plan, seeds=tuple(args.seed + i for i in range(len(plan.seeds))))
    out = args.out or f"sweeps/{axis}"
    report = converge(plan, out, cache=args.cache, jobs=args.jobs)
    print(report_table(report))
    print(f"report in {Path(out) / 'report.json'}")
    return EXIT_OK


def _validate(args) -> int:
    from .harness import validate_hypotheses

    raw = _read_json(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    rep = validate_hypotheses(raw)
    for name, c in rep["checks"].items():
        detail = c.get("detail", "")
        if name == "F0_M6":
            detail = f"M6 growth under vmax doubling {c['growth'][-1]:.3g}"
        elif name == "u0_smoothness":
            detail = f"high-band energy fraction {c['high_band_energy_fraction']:.3g}"
        elif isinstance(detail, dict):
            detail = ", ".join(f"{k}={v:.3g}" for k, v in detail.items())
        print(f"{'PASS' if c['ok'] else 'FAIL'}  {name}: {detail}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "validation.json").write_text(json.dumps(rep, indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK


def _estimate_ku(args) -> int:
    from .config import from_dict
    from .harness import estimate_ku_report

    raw = _read_json(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    rep = estimate_ku_report(from_dict(raw), args.out)
    print(f"K_u ≈ {rep['K_u']:.6g}; use R = {rep['R']:.6g} (estimated with R = {rep['R_used']:.4g})")
    return EXIT_OK


def _compare(args) -> int:
    from .harness import compare_runs, gap_csv

    cmp = compare_runs(*args.runs)
    text = gap_csv(cmp)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    print(f"max sup gap {cmp['max_sup_gap']:.6g}; identical checksums: {cmp['identical_checksums']}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        runtime.configure_threads(args.threads)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .checkpoint import CheckpointError
    from .errors import ConfigError, NumericalAbort
    from .mollifier import MollifierError
    from .particles import SamplingError

    handlers = {
        "simulate": _simulate,
        "converge": lambda a: _converge(a, "N"),
        "sweep-beta": lambda a: _converge(a, "beta"),
        "validate": _validate,
        "estimate-ku": _estimate_ku,
        "compare": _compare,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, MollifierError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalAbort, SamplingError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
