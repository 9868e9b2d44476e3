"""Command line front end: one subcommand per experiment kind.

Each subcommand loads an optional JSON config, merges it over the built-in
defaults, runs the experiment, writes <out>/<kind>.csv and prints one
verdict line per named check.  Exit status is zero only when every check
passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxopt",
        description="Convergence experiments for flux-controlled boundary problems",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    helps = {
        "state-conv": "mesh convergence of state and adjoint at a fixed control",
        "control-conv": "mesh convergence of the optimal control",
        "alpha-sweep": "large transfer coefficient limit at a fixed mesh",
        "diagram": "joint mesh/transfer-coefficient distance table",
        "constants": "discrete coercivity and trace constants per level",
    }
    for kind in harness.KINDS:
        p = sub.add_parser(kind, help=helps[kind])
        p.add_argument("--config", metavar="PATH", help="JSON config file (defaults apply if omitted)")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory for the CSV report")
        p.add_argument("--seed", type=int, metavar="N", help="override the config seed for random starts")
    return parser


def _load_config(kind: str, path, seed) -> harness.ExperimentConfig:
    data = {}
    if path is not None:
        with open(path) as handle:
            data = json.load(handle)
    if seed is not None:
        data = dict(data)
        data["seed"] = seed
    return harness.config_from_dict(kind, data)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args.kind, args.config, args.seed)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report = harness.run(config)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, f"{config.kind}.csv")
    harness.write_csv(report, out_path)
    if config.kind == "constants":
        for row in report.rows:
            print(
                f"n={row[0]:d} h={row[1]:.6g} lambda={row[2]:.12g} "
                f"lambda1={row[3]:.12g} gamma0_norm={row[4]:.12g}"
            )
    for name in sorted(report.checks):
        value = report.checks[name]
        verdict = "PASS" if value is True else ("FAIL" if value is False else str(value))
        print(f"check {name}: {verdict}")
    print(f"report written to {out_path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
