"""Command-line experiment runner.

Usage::

    cauchy-bpre <experiment> [--config FILE] [--seed N] [--workers N] [--out DIR]

The output directory may also be set through ``CAUCHY_BPRE_OUT`` (the
``--out`` flag wins).  Exit status: 0 when every verdict holds, 1 when one
fails (named on stderr), 2 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

import yaml

from . import __version__
from .experiments import EXPERIMENTS, RUNNERS, ConfigError, ExperimentConfig
from .io import emit_plotdata, write_csv, write_json

OUT_ENV = "CAUCHY_BPRE_OUT"


def _build_id() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def load_config(path: str | None, experiment: str, overrides: dict) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"malformed config: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data, experiment)


def run(cfg: ExperimentConfig) -> dict:
    """Run one experiment, write its outputs and return the manifest."""
    out = Path(cfg.output_dir) / cfg.experiment
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = RUNNERS[cfg.experiment](cfg)
    wall = time.perf_counter() - t0
    files = []
    for name, (rows, cols) in result.tables.items():
        files.append(str(write_csv(out / f"{name}.csv", rows, cols)))
    for name, (x, y, yerr) in result.plots.items():
        files.append(str(emit_plotdata(out / f"plot_{name}.csv", x, y, yerr)))
    files.append(str(write_json(out / "summary.json", result.summary)))
    manifest = {"config": cfg.as_dict(), "build": _build_id(), "wall_time_s": wall,
                "outputs": files, "verdicts": {k: bool(v) for k, v in result.verdicts.items()}}
    write_json(out / "manifest.json", manifest)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cauchy-bpre", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    out = args.out or os.environ.get(OUT_ENV)
    try:
        cfg = load_config(args.config, args.experiment,
                          {"seed": args.seed, "workers": args.workers, "trials": args.trials,
                           "output_dir": out})
        manifest = run(cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    failed = [k for k, ok in manifest["verdicts"].items() if not ok]
    for k, ok in manifest["verdicts"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {k}")
    if failed:
        print(f"assertion failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
