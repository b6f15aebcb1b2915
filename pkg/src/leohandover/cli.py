"""Command line front end.

Subcommands: `train` fits one agent per sweep cell and writes checkpoints,
`evaluate` runs the policy sweep and emits the result CSVs, `oracle-check`
validates the policies against the tiny-instance enumeration optimum, and
`gradcheck` verifies analytic gradients against finite differences.  Exit
codes: 0 success, 1 failure with a diagnostic, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .errors import ConfigurationError
from .experiments import load_config, run_sweep, train_all, train_cell
from .neuralnet import gradient_check

GRADCHECK_TOLERANCE = 1e-4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leohandover",
        description="Satellite handover experiments: training, sweeps, checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train agents for the sweep cells")
    train.add_argument("--config", required=True, help="experiment YAML")
    train.add_argument("--seed", type=int, help="override the master seed")
    train.add_argument("--out", default="out", help="output directory")
    train.add_argument("--checkpoints", help="checkpoint directory (default OUT/checkpoints)")
    train.add_argument("--users", type=int, help="train only this user count")
    train.add_argument("--capacity", type=int, help="train only this capacity")

    ev = sub.add_parser("evaluate", help="run the policy sweep and write CSVs")
    ev.add_argument("--config", required=True, help="experiment YAML")
    ev.add_argument("--seed", type=int, help="override the master seed")
    ev.add_argument("--out", default="out", help="output directory")
    ev.add_argument("--checkpoints", help="checkpoint directory (default OUT/checkpoints)")
    ev.add_argument("--policy", action="append",
                    help="restrict to this policy (repeatable)")

    oc = sub.add_parser("oracle-check", help="tiny-instance dominance validation")
    oc.add_argument("--instances", type=int, default=50)
    oc.add_argument("--seed", type=int, default=0)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gc.add_argument("--instances", type=int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    return parser


def _load(args) -> "ExperimentConfig":
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    return config


def _cmd_train(args) -> int:
    config = _load(args)
    ckpt = args.checkpoints if args.checkpoints else Path(args.out) / "checkpoints"
    if (args.users is None) != (args.capacity is None):
        print("error: --users and --capacity must be given together", file=sys.stderr)
        return 2
    if args.users is not None:
        path, _ = train_cell(config, args.users, args.capacity, args.out, ckpt)
        print(f"wrote {path}")
    else:
        for path in train_all(config, args.out, ckpt):
            print(f"wrote {path}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _load(args)
    ckpt = args.checkpoints if args.checkpoints else Path(args.out) / "checkpoints"
    policies = tuple(args.policy) if args.policy else None
    rows, aggregates, failures = run_sweep(config, args.out,
                                           checkpoint_dir=ckpt, policies=policies)
    print(f"{len(rows)} rows, {len(aggregates)} aggregates -> {args.out}")
    if failures:
        print(f"warning: {len(failures)} cell(s) failed, see failures.csv",
              file=sys.stderr)
    return 0


def _cmd_oracle_check(args) -> int:
    from .experiments import oracle_validation_suite

    summary = oracle_validation_suite(n_instances=args.instances, seed=args.seed)
    print(f"instances: {summary['instances']}, min dominance gap: "
          f"{summary['min_gap']:.3e}")
    if not summary["dominated"]:
        print("error: a policy beat the enumeration optimum", file=sys.stderr)
        return 1
    return 0


def _cmd_gradcheck(args) -> int:
    err = gradient_check(n_instances=args.instances, seed=args.seed)
    print(f"max relative gradient error over {args.instances} instances: {err:.3e}")
    if err >= GRADCHECK_TOLERANCE:
        print(f"error: exceeds tolerance {GRADCHECK_TOLERANCE}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "oracle-check": _cmd_oracle_check,
        "gradcheck": _cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
