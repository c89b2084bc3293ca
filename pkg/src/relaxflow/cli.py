"""Command-line interface.

    relaxflow simulate|converge|darcy|damped|spectrum|decay|selftest
        --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]

Exit codes: 0 = all numerical gates of the invoked experiment passed,
1 = a numerical gate failed, 2 = configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import KINDS, ConfigError, ExperimentConfig, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaxflow",
        description="Experiment drivers for the two-phase relaxation solver.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config file (defaults are used if omitted)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (overrides config output_dir)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None,
                       help="parallel sweep members")
    return parser


def load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config is not None:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a flat JSON object")
    if "kind" in raw and raw["kind"] != args.kind:
        raise ConfigError(
            f"config kind {raw['kind']!r} does not match subcommand {args.kind!r}"
        )
    raw["kind"] = args.kind
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.out is not None:
        raw["output_dir"] = str(args.out)
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        out_dir = Path(cfg.output_dir) if cfg.output_dir else None
        record = run_experiment(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2

    for name, ok in sorted(record.gates.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for failure in record.failures:
        print(f"note: {failure}")
    if out_dir is not None:
        print(f"outputs written to {out_dir}")
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
