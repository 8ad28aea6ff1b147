"""Command-line entry point.

    sdenet train        [-c config] [--set key=value ...]
    sdenet eval-ood     ...
    sdenet eval-misclass ...
    sdenet attack       ...
    sdenet active-learn ...
    sdenet visualize    ...
    sdenet selfcheck    [--trials N]

Configs are TOML (or JSON); ``--set a.b.c=value`` overrides single keys,
values parsed as JSON with a fallback to bare strings. Exit codes:
0 success, 2 config error, 3 numeric error, 4 undefined metric.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .errors import SdeNetError, exit_code_for

COMMANDS = {
    "train": experiments.run_train,
    "eval-ood": experiments.run_ood_experiment,
    "eval-misclass": experiments.run_misclassification_experiment,
    "attack": experiments.run_attack_experiment,
    "active-learn": experiments.run_active_learning,
    "visualize": experiments.run_visualization,
}

EXPERIMENT_NAMES = {
    "train": "train",
    "eval-ood": "ood",
    "eval-misclass": "misclassification",
    "attack": "attack",
    "active-learn": "active_learning",
    "visualize": "visualize",
}


def _parse_set(pairs: list[str]) -> dict:
    overrides: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise SystemExit(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = overrides
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdenet")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="TOML or JSON config file")
        p.add_argument("--output-dir", help="override output directory")
        p.add_argument("--seeds", help="comma-separated seed list")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
    check = sub.add_parser("selfcheck")
    check.add_argument("--trials", type=int, default=200)
    check.add_argument("--max-size", type=int, default=100)
    check.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selfcheck":
            result = experiments.run_selfcheck(args.trials, args.max_size, args.seed)
            for name, diff in sorted(result["worst_abs_difference"].items()):
                status = "pass" if diff < 1e-12 else "FAIL"
                print(f"{status}  {name}: worst |fast - bruteforce| = {diff:.3e}")
            print("selfcheck " + ("passed" if result["passed"] else "FAILED"))
            return 0 if result["passed"] else 1

        file_config = experiments.load_config_file(args.config) if args.config else None
        overrides = _parse_set(args.set)
        if args.output_dir:
            overrides["output_dir"] = args.output_dir
        if args.seeds:
            overrides["seeds"] = [int(s) for s in args.seeds.split(",")]
        config = experiments.effective_config(EXPERIMENT_NAMES[args.command],
                                              file_config, overrides)
        payload = COMMANDS[args.command](config)
        summary = json.dumps(payload["summary"], sort_keys=True, indent=2)
        print(f"{payload['experiment']}: wrote {config['output_dir']}")
        print(summary)
        return 0
    except SdeNetError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
