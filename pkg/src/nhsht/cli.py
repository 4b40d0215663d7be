"""Command line interface.

Subcommands: ``solve-policy`` (dump guiding distributions as JSON),
``run`` (full Monte Carlo campaign from a config file), ``bounds``
(bound curves only), and ``reproduce-fig2`` (generate the benchmark
instance and rebuild the cost-versus-error-target figure data).
Failures exit nonzero with a one-line JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .harness import (
    ExperimentConfig,
    emit_outputs,
    instance_from_spec,
    load_config,
    run_campaign,
    write_bounds_outputs,
)
from .bounds import compute_bounds_report
from .model import build_kld_tensor, check_assumptions
from .policies import Scheme, compute_policy


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nhsht", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve-policy", help="print one scheme's guiding distributions as JSON")
    sp.add_argument("--config", required=True)
    sp.add_argument("--scheme", required=True, help="classic | cost-aware | bit-per-buck")

    rp = sub.add_parser("run", help="run the configured Monte Carlo campaign")
    rp.add_argument("--config", required=True)
    rp.add_argument("--workers", type=int, default=None, help="override config worker count")

    bp = sub.add_parser("bounds", help="write bound curves (CSV + JSON) for a config")
    bp.add_argument("--config", required=True)

    fp = sub.add_parser(
        "reproduce-fig2",
        help="benchmark instance, all three schemes, default error-target grid",
    )
    fp.add_argument("--seed", type=int, required=True)
    fp.add_argument("--trials", type=int, default=50000)
    fp.add_argument("--out", default="fig2_out")
    fp.add_argument("--workers", type=int, default=1)
    return parser


def _cmd_solve_policy(args) -> int:
    config = load_config(args.config)
    inst = instance_from_spec(config.instance)
    tensor = build_kld_tensor(inst)
    policy = compute_policy(tensor, inst.costs, Scheme.parse(args.scheme))
    payload = {
        "scheme": policy.scheme.value,
        "lambdas": policy.lambdas.tolist(),
        "objective_values": policy.objective_values.tolist(),
    }
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.workers is not None:
        config = dataclasses.replace(config, workers=args.workers)
    result = run_campaign(config)
    for path in emit_outputs(result):
        print(path)
    return 0


def _cmd_bounds(args) -> int:
    config = load_config(args.config)
    inst = instance_from_spec(config.instance)
    tensor = build_kld_tensor(inst)
    report = check_assumptions(inst, tensor)
    if not report.all_ok:
        raise ValueError("instance fails assumption checks; bounds would be meaningless")
    bounds = compute_bounds_report(
        inst, tensor, inst.costs, None, config.delta_grid,
        epsilon=config.epsilon, eta_rule=config.eta_rule, beta=config.beta,
    )
    for path in write_bounds_outputs(bounds, config.output_dir):
        print(path)
    return 0


def _cmd_reproduce_fig2(args) -> int:
    config = ExperimentConfig(
        instance={"type": "benchmark", "seed": args.seed},
        trials_per_point=args.trials,
        master_seed=args.seed,
        workers=args.workers,
        output_dir=args.out,
    )
    result = run_campaign(config)
    for path in emit_outputs(result):
        print(path)
    return 0


_COMMANDS = {
    "solve-policy": _cmd_solve_policy,
    "run": _cmd_run,
    "bounds": _cmd_bounds,
    "reproduce-fig2": _cmd_reproduce_fig2,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # surface every failure as machine-readable JSON
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
