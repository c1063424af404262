"""Command-line interface: simulate, optimize, sweep, reproduce.

Exit codes: 0 on success, 1 on usage errors (bad flags, malformed configs,
unknown scenario names), 2 on computation failures (such as an optimization
that was asked for a positive rate and could not find one).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ComputationError, ConfigError, NoPositiveRateError
from .optimizer import build_search_space, optimize_protocol
from .params import ProtocolProfile, load_config, load_profile, mode_for_decoys
from .channel import simulate_observations
from .scenarios import COLUMNS, ScenarioSpec, run_scenario, run_sweep

LOG = logging.getLogger(__name__)

#: Fallback protocol choice for ``simulate`` when no profile file is given.
DEFAULT_PROFILE = ProtocolProfile(
    mode="two-decoy",
    intensities=(0.3, 0.05, 1e-5),
    p_intensity=(0.5, 0.3, 0.2),
    p_x_given_intensity=(0.1, 0.6, 0.8),
    basis_policy="optimal",
)

_SCENARIO_HELP = """\
scenarios (each writes one CSV):
  fig1    asymptotic rate vs distance, estimator comparison
  fig2    finite-statistics rate vs distance, optimization-scope comparison
  fig3    rate vs distance per decoy count
          (columns: distance_km,rate_1decoy,rate_2decoy,rate_3decoy)
  fig4    finite-statistics rate vs distance per decoy count, all free
  fig5    idealized optimal signal intensity vs distance
  fig6a   rate over a (mu, nu) grid, everything else re-optimized
  fig6b   rate vs weakest decoy omega at 10 km, re-optimized
  table1  exhaustive grid vs local search on the same space
  table3  basis-policy comparison grid
  table4  optimized vs prior-art parameter sets at 50 km
  table5  decoy-count and bound-method comparison grid

All scenarios except fig3 share the column set:
  %s
Intensity-probability cells store only the heads; the last probability is
1 minus their sum.  '#' lines carry the base parameters as JSON plus curve
notes, so every file re-evaluates standalone.
""" % ",".join(COLUMNS)


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1 (not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: usage error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="mdiqkd",
        description="Decoy-state MDI-QKD simulation, bounds and optimization.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_sim = sub.add_parser(
        "simulate", help="emit simulated mean observables as JSON",
        description="Deterministically simulate the observables (gains, "
        "error rates, pulse counts) of every intensity/basis setting.",
    )
    p_sim.add_argument("--config", default="table2",
                       help="preset name or JSON file (default: table2)")
    p_sim.add_argument("--distance-km", type=float, default=None,
                       help="override the config's fiber length")
    p_sim.add_argument("--profile", default=None,
                       help="protocol profile JSON file (default: built-in)")
    p_sim.add_argument("--out", default=None, help="write JSON here "
                       "instead of stdout")
    p_sim.set_defaults(func=_cmd_simulate)

    p_opt = sub.add_parser(
        "optimize", help="optimize protocol parameters, emit JSON",
        description="Run the local search and report the optimized profile, "
        "rate and search trace.  Exits 2 if no positive rate exists.",
    )
    p_opt.add_argument("--config", default="table2",
                       help="preset name or JSON file (default: table2)")
    p_opt.add_argument("--decoys", type=int, choices=(1, 2, 3), default=2)
    p_opt.add_argument("--method", choices=("analytic", "lp"),
                       default="analytic")
    p_opt.add_argument("--policy",
                       choices=("unbiased", "simplified", "optimal"),
                       default="optimal")
    p_opt.add_argument("--finite", action="store_true",
                       help="include statistical fluctuations "
                       "(default: asymptotic)")
    p_opt.add_argument("--distance-km", type=float, default=None)
    p_opt.add_argument("--n-pulses", type=float, default=None)
    p_opt.add_argument("--out", default=None)
    p_opt.set_defaults(func=_cmd_optimize)

    p_sweep = sub.add_parser(
        "sweep", help="re-optimize along one swept parameter, emit CSV",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Sweep a system quantity (distance_km, n_pulses) or a "
        "protocol coordinate (mu, nu, omega, p_mu, p_x_mu, ...).  Protocol "
        "coordinates are pinned at each swept value while everything else "
        "is re-optimized, warm-started point to point.",
        epilog="columns:\n  " + ",".join(COLUMNS),
    )
    p_sweep.add_argument("--config", default="table2")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--from", dest="lo", type=float, required=True)
    p_sweep.add_argument("--to", dest="hi", type=float, required=True)
    p_sweep.add_argument("--points", type=int, required=True)
    p_sweep.add_argument("--log", action="store_true",
                         help="log-spaced points")
    p_sweep.add_argument("--decoys", type=int, choices=(1, 2, 3), default=2)
    p_sweep.add_argument("--method", choices=("analytic", "lp"),
                         default="analytic")
    p_sweep.add_argument("--policy",
                         choices=("unbiased", "simplified", "optimal"),
                         default="optimal")
    p_sweep.add_argument("--finite", action="store_true")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_rep = sub.add_parser(
        "reproduce", help="write one reference figure/table as CSV",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Re-run a bundled scenario end to end.",
        epilog=_SCENARIO_HELP,
    )
    p_rep.add_argument("name", help="scenario name (see below)")
    p_rep.add_argument("--config", default="table2")
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--workers", type=int, default=None,
                       help="thread count (default: MDIQKD_THREADS or "
                       "CPU count)")
    p_rep.set_defaults(func=_cmd_reproduce)
    return parser


def _emit(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_simulate(args) -> int:
    params = load_config(args.config)
    if args.distance_km is not None:
        params = params.with_distance(args.distance_km)
    profile = load_profile(args.profile) if args.profile else DEFAULT_PROFILE
    obs = simulate_observations(params, profile)
    records = [
        {
            "intensity_a": qa,
            "intensity_b": qb,
            "basis": basis,
            "gain": obs.gain(qa, qb, basis),
            "qber": obs.qber(qa, qb, basis),
            "pulses": obs.pulse_counts[(qa, qb, basis)],
        }
        for (qa, qb, basis) in obs.settings()
    ]
    _emit(
        {
            "params": params.to_dict(),
            "profile": profile.to_dict(),
            "observations": records,
        },
        args.out,
    )
    return 0


def _cmd_optimize(args) -> int:
    params = load_config(args.config)
    if args.distance_km is not None:
        params = params.with_distance(args.distance_km)
    if args.n_pulses is not None:
        params = params.with_pulses(args.n_pulses)
    mode = mode_for_decoys(args.decoys)
    profile, report, trace = optimize_protocol(
        params, mode, args.policy, args.method, finite=args.finite,
    )
    space = build_search_space(mode, args.policy, finite=args.finite)
    payload = {
        "params": params.to_dict(),
        "method": args.method,
        "finite": args.finite,
        "profile": profile.to_dict(),
        "optimized_parameters": {
            name: float(value)
            for name, value in zip(space.free_coordinates, trace.best_vector)
        },
        "rate_per_pulse": report.rate_per_pulse,
        "bounds": {
            "y11_lower": report.y11_lower,
            "e11_upper": report.e11_upper,
        },
        "trace": {
            "converged": trace.converged,
            "evaluations": trace.evaluations,
            "cycles": trace.cycles,
            "coordinate_steps": trace.coordinate_steps,
            "rates": [rate for _, rate in trace.iterations],
        },
    }
    _emit(payload, args.out)
    if report.rate_per_pulse <= 0.0:
        print("no positive key rate at these settings", file=sys.stderr)
        return 2
    return 0


def _cmd_sweep(args) -> int:
    params = load_config(args.config)
    path = run_sweep(
        params, args.param, args.lo, args.hi, args.points,
        decoys=args.decoys, method=args.method, policy=args.policy,
        finite=args.finite, log_spacing=args.log,
        out_path=Path(args.out) if args.out else None,
    )
    print(path)
    return 0


def _cmd_reproduce(args) -> int:
    params = load_config(args.config)
    spec = ScenarioSpec(name=args.name)
    path = run_scenario(
        spec, params=params,
        out_path=Path(args.out) if args.out else None,
        workers=args.workers,
    )
    print(path)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ComputationError, NoPositiveRateError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
