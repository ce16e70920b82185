"""Command line entry point: ``kondo-phonon <experiment> --config run.json --out dir``.

Exit status: 0 all assertions pass, 1 assertion failure, 2 config/parse
error, 3 model assumption violated, 4 eigensolver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .diagnostics import AmbiguousDegeneracy
from .experiments import EXPERIMENTS, RUNNERS, ConfigError, ExperimentResult, check_assumptions, parse_config
from .lattice import AssumptionViolation
from .spectral import SolverError

EXIT_OK, EXIT_ASSERT, EXIT_PARSE, EXIT_ASSUMPTION, EXIT_SOLVER = 0, 1, 2, 3, 4


def format_value(v) -> str:
    """CSV cell: 17 significant digits for floats, locale independent."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return str(v)


def write_csv(result: ExperimentResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([format_value(row.get(c)) for c in result.columns])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kondo-phonon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="artifact directory (default: config 'output' or ./out)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--check-only", action="store_true", help="validate config and assumptions, no solve")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        raw = json.loads(Path(args.config).read_text())
        cfg = parse_config(raw)
        if cfg.experiment not in (None, args.experiment):
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
    except AssumptionViolation as err:
        print(f"assumption violation: {err}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (OSError, json.JSONDecodeError, ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_PARSE
    try:
        check_assumptions(cfg, args.experiment)
    except AssumptionViolation as err:
        print(f"assumption violation: {err}", file=sys.stderr)
        return EXIT_ASSUMPTION
    if args.check_only:
        print(f"{args.experiment}: config and assumptions OK")
        return EXIT_OK

    start = time.perf_counter()
    try:
        result = RUNNERS[args.experiment](cfg, args.threads)
    except (SolverError, AmbiguousDegeneracy) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except AssumptionViolation as err:
        print(f"assumption violation: {err}", file=sys.stderr)
        return EXIT_ASSUMPTION
    wall = time.perf_counter() - start

    out = Path(args.out or cfg.output or "out")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(result, out / f"{args.experiment}.csv")
    status = EXIT_OK if result.passed else EXIT_ASSERT
    manifest = {
        "experiment": args.experiment,
        "config": raw,
        "lattice": cfg.lattice.name,
        "cutoff_ladder": {"policy": cfg.policy, "cutoffs": cfg.cutoffs},
        "cutoff_deltas": result.cutoff_deltas,
        "assertions": result.assertions,
        "summary": result.summary,
        "exit_status": status,
        "wall_time_s": wall,
        "versions": {
            "kondo_phonon": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
        },
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    for name, ok in result.assertions.items():
        print(f"{'PASS' if ok else 'FAIL'} {args.experiment}:{name}")
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
