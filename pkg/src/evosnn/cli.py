"""Command-line entry point: ``evosnn run | ensemble | analyze``.

Exit status: 0 on success, 1 when a run or analysis fails (I/O, stalled
experiment, unreadable input, every ensemble member failed), 2 for usage
errors, 3 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import contextlib
import datetime as dt
import hashlib
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, backend as backends, config as configmod
from . import rng as rngmod
from .analysis import HistogramSpec, compare_strategies, fit_logistic, histogram, summarize
from .config import Config, ConfigError
from .experiment import (StallError, TrajectoryFormatError, read_trajectory_csv, run_ensemble,
                         run_experiment)

log = logging.getLogger("evosnn")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3

TRAJECTORY = "trajectory.csv"
CAPTURES = "captures.csv"
CONFIG = "config.toml"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# manifests


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, started: str, cfg: Config | None, seeds: Sequence[int],
                   backend: str | None, extra: dict | None = None) -> Path:
    """Record what was run and every file produced under ``out`` (checksummed)."""
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    manifest = {
        "tool": "evosnn",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "started": started,
        "finished": _now(),
        "backend": backend,
        "rng": rngmod.RNG_NAME,
        "seeds": list(seeds),
        "config": cfg.to_dict() if cfg is not None else None,
        "files": [{"path": p.relative_to(out).as_posix(), "bytes": p.stat().st_size, "sha256": _sha256(p)}
                  for p in files],
    }
    manifest.update(extra or {})
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# configuration from arguments


def _load_config(args: argparse.Namespace) -> Config:
    overrides = list(args.set or [])
    for flag, key in (("seed", "experiment.seed"), ("generations", "experiment.max_generations"),
                      ("strategy", "evolution.strategy")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    path = args.config
    if path is not None and Path(path).suffix == ".json":
        # a manifest: rerun exactly what it recorded
        snap = json.loads(Path(path).read_text()).get("config")
        if not isinstance(snap, dict):
            raise ConfigError(f"{path}: no config snapshot in manifest")
        base = configmod.merge(snap, configmod.env_overrides(), configmod.parse_overrides(overrides))
        return configmod.from_dict(base)
    return configmod.load(path, overrides)


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(out: Path, res) -> None:
    res.trajectory.write(out / TRAJECTORY)
    with open(out / CAPTURES, "w", newline="") as fh:
        res.captures.write_csv(fh)


# ---------------------------------------------------------------------------
# commands


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    started = _now()
    out = _prepare_out(args.out)
    name = backends.default_name() if args.backend is None else args.backend
    with contextlib.ExitStack() as stack:
        traj = stack.enter_context(open(out / "trajectory_dump.jsonl", "w")) if args.dump_trajectory else None
        phen = stack.enter_context(open(out / "phenotypes.jsonl", "w")) if args.dump_phenotypes else None
        res = run_experiment(cfg, backend=name, trajectory_dump=traj, phenotype_dump=phen,
                             phenotype_every=args.phenotype_every)
    _write_run(out, res)
    (out / CONFIG).write_text(configmod.dumps(cfg))
    write_manifest(out, "run", started, cfg, [cfg.experiment.seed], name,
                   {"timesteps": res.timesteps, "generations": res.generations})
    log.info("seed %d: %d generations in %d steps -> %s", cfg.experiment.seed, res.generations,
             res.timesteps, out / TRAJECTORY)
    return EXIT_OK


def seed_dir(seed: int) -> str:
    return f"seed-{seed:05d}"


def cmd_ensemble(args: argparse.Namespace) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    cfg = _load_config(args)
    started = _now()
    out = _prepare_out(args.out)
    name = backends.default_name() if args.backend is None else args.backend
    members = run_ensemble(cfg, args.seeds, jobs=args.jobs, backend=name)
    # all files are written here, by the parent process, after the workers finish
    failures = []
    for m in members:
        if not m.ok:
            failures.append({"seed": m.seed, "error": m.error})
            continue
        d = out / seed_dir(m.seed)
        d.mkdir(exist_ok=True)
        _write_run(d, m.result)
    (out / CONFIG).write_text(configmod.dumps(cfg))
    write_manifest(out, "ensemble", started, cfg, [m.seed for m in members], name,
                   {"jobs": args.jobs, "failures": failures,
                    "seconds": {str(m.seed): round(m.seconds, 3) for m in members}})
    n_ok = len(members) - len(failures)
    log.info("%d/%d seeds succeeded -> %s", n_ok, len(members), out)
    for f in failures:
        log.error("seed %d failed: %s", f["seed"], f["error"])
    return EXIT_OK if n_ok else EXIT_FAILURE


def _trajectory_files(path: Path) -> list[Path]:
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file or directory")
    if path.is_file():
        return [path]
    direct = path / TRAJECTORY
    if direct.is_file():
        return [direct]
    found = sorted(path.glob(f"*/{TRAJECTORY}"))
    if not found:
        raise FileNotFoundError(f"{path}: no {TRAJECTORY} files found")
    return found


def _fit_file(path: Path, cfg: Config):
    g, T = read_trajectory_csv(path)
    return fit_logistic(g, T, k_guess=cfg.analysis.k_guess)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_json_safe(obj), indent=2) + "\n")


def _fits_table(files: Sequence[Path], fits, root: Path) -> str:
    head = "trajectory,converged,L,k,g0,c,L_err,k_err,g0_err,c_err,chi2,n_points"
    rows = [head]
    for p, f in zip(files, fits):
        vals = [f.L, f.k, f.g0, f.c, f.L_err, f.k_err, f.g0_err, f.c_err, f.chi2]
        rows.append(",".join([p.relative_to(root).as_posix() if p.is_relative_to(root) else str(p),
                              str(int(f.converged))] + [repr(float(v)) for v in vals] + [str(f.n_points)]))
    return "\n".join(rows) + "\n"


def _ensemble_outputs(label: str, files: Sequence[Path], fits, cfg: Config, root: Path, out: Path):
    (out / f"{label}fits.csv").write_text(_fits_table(files, fits, root))
    summary = summarize(label.rstrip("_") or "ensemble", fits, cfg.analysis)
    if len(summary.g0_values):
        (out / f"{label}g0_histogram.csv").write_text(
            histogram(summary.g0_values, HistogramSpec(cfg.analysis.inflection_bin)).to_csv())
        (out / f"{label}c_histogram.csv").write_text(
            histogram(summary.c_values, HistogramSpec(cfg.analysis.convergence_bin)).to_csv())
    return summary


def _summary_dict(s) -> dict:
    out = {"name": s.name, "n_fits": s.n_fits, "n_converged": s.n_converged,
           "g0_mean": s.g0_mean, "g0_sample_mean": s.g0_sample_mean, "g0_sem": s.g0_sem}
    if s.inflection is not None:
        out["inflection"] = [vars(c) for c in s.inflection.components]
    if s.convergence is not None:
        v = s.convergence
        out["convergence"] = {"bimodal": v.bimodal, "chi2_ratio": v.chi2_ratio, "minor_weight": v.minor_weight,
                              "dip": v.dip, "upper_fraction": v.upper_fraction,
                              "components": [vars(c) for c in v.best.components]}
    return out


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    started = _now()
    inputs = [Path(p) for p in args.inputs]
    want = {"single": 1, "ensemble": 1, "compare": 2}[args.mode]
    if len(inputs) != want:
        raise UsageError(f"analyze {args.mode} takes {want} input path(s), got {len(inputs)}")
    groups = [_trajectory_files(p) for p in inputs]
    out = _prepare_out(args.out)
    if args.mode == "single":
        if len(groups[0]) != 1:
            raise UsageError(f"{inputs[0]} holds {len(groups[0])} trajectories; use 'analyze ensemble'")
        fit = _fit_file(groups[0][0], cfg)
        _dump_json(out / "fit.json", {"trajectory": str(groups[0][0]), **fit.to_dict()})
        print(f"g0 = {fit.g0:.1f} ± {fit.g0_err:.1f}  k = {fit.k:.4f}  L = {fit.L:.1f}  c = {fit.c:.1f}"
              f"  ({fit.message})")
        rc = EXIT_OK if fit.converged else EXIT_FAILURE
    elif args.mode == "ensemble":
        fits = [_fit_file(p, cfg) for p in groups[0]]
        s = _ensemble_outputs("", groups[0], fits, cfg, inputs[0], out)
        _dump_json(out / "summary.json", _summary_dict(s))
        print(f"{s.n_converged}/{s.n_fits} converged fits; mean g0 = {s.g0_mean:.1f}")
        rc = EXIT_OK
    else:
        names = tuple(args.names) if args.names else tuple(p.name for p in inputs)
        fits = [[_fit_file(p, cfg) for p in files] for files in groups]
        for label, files, fs, root in zip(("a_", "b_"), groups, fits, inputs):
            _ensemble_outputs(label, files, fs, cfg, root, out)
        cmp = compare_strategies(fits[0], fits[1], cfg.analysis, names)
        (out / "comparison.csv").write_text(cmp.to_csv())
        (out / "table.txt").write_text(cmp.table())
        _dump_json(out / "summary.json", {"speedup": cmp.speedup, "warnings": cmp.warnings,
                                          "strategies": [_summary_dict(cmp.a), _summary_dict(cmp.b)]})
        print(cmp.table(), end="")
        rc = EXIT_OK
    write_manifest(out, f"analyze {args.mode}", started, cfg, [], None,
                   {"inputs": [str(p) for p in inputs]})
    return rc


# ---------------------------------------------------------------------------
# argument parsing


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file, or a manifest.json to rerun")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config key (repeatable)")


def _sim_args(p: argparse.ArgumentParser) -> None:
    _config_args(p)
    p.add_argument("--seed", type=int, help="experiment seed (first seed for ensembles)")
    p.add_argument("--generations", type=int, help="generations to evolve")
    p.add_argument("--strategy", choices=configmod.STRATEGIES)
    p.add_argument("--backend", choices=backends.available(), help="stepping kernel (default: fastest)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evosnn", description="Evolve spiking-network foragers and analyze learning curves.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _sim_args(run)
    run.add_argument("--dump-trajectory", action="store_true",
                     help="write every time step to trajectory_dump.jsonl")
    run.add_argument("--dump-phenotypes", action="store_true",
                     help="write population phenotypes to phenotypes.jsonl")
    run.add_argument("--phenotype-every", type=int, default=1, metavar="N",
                     help="phenotype dump interval in generations")
    run.set_defaults(func=cmd_run)

    ens = sub.add_parser("ensemble", help="run consecutive seeds")
    _sim_args(ens)
    ens.add_argument("--seeds", type=int, default=100, help="number of seeds")
    ens.add_argument("--jobs", type=int, default=1, help="worker processes")
    ens.set_defaults(func=cmd_ensemble)

    ana = sub.add_parser("analyze", help="fit trajectories")
    ana.add_argument("mode", choices=("single", "ensemble", "compare"))
    ana.add_argument("inputs", nargs="+", help="trajectory CSV, run directory or ensemble directory")
    _config_args(ana)
    ana.add_argument("--names", nargs=2, metavar=("FIRST", "SECOND"), help="labels for compare mode")
    ana.add_argument("--out", required=True, help="output directory")
    ana.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"evosnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"evosnn: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, StallError, TrajectoryFormatError, ValueError) as exc:
        print(f"evosnn: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
