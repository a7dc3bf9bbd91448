"""Command-line harness.

Exit codes: 0 = every judged metric passed, 1 = some threshold failed,
2 = configuration or convergence error.
"""

from __future__ import annotations

import argparse
import sys
import time

from . import experiments
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, ConvergenceError, GradGraphError

_COMMANDS = {
    "phase": (experiments.run_phase_summary, "phase and eigenvalue summary of the configured potential"),
    "rotate-check": (experiments.run_rotation_check, "derive rotation constants and certify the bounds"),
    "minimize": (experiments.run_minimize, "minimize the graph volume with frozen boundary layers"),
    "bernstein": (experiments.run_bernstein_sweep, "flattening sweep over growing domains"),
    "liouville": (experiments.run_liouville, "certified rotation + oscillation decay + Harnack ratios"),
    "harnack": (experiments.run_harnack_suite, "seeded uniformly elliptic Harnack suite on a ball"),
    "theorem4": (experiments.run_functional_constancy, "constancy of eigenvalue functionals under the metric Laplacian"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        p.add_argument("--out", metavar="DIR", help="write report.txt and CSV tables here")
        p.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
        p.add_argument("--verbose", action="store_true", help="verbose output (iteration logs)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    runner, _ = _COMMANDS[args.command]
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.verbose:
            cfg.verbose = True
        start = time.perf_counter()
        report = runner(cfg, outdir=args.out)
        wall = time.perf_counter() - start
        sys.stdout.write(report.render(wall))
        if args.out:
            report.write(args.out, wall)
        return 0 if report.passed else 1
    except (ConfigurationError, ConvergenceError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except GradGraphError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
