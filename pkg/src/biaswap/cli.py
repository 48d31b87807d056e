"""Command-line entry point.

    biaswap <stage|all> --config <path> [--force] [--seed N]
            [--ablation c1|c2] [--oracle-swap]

Stages: data, biased_train, partition, swapae_train, augment, debias_train,
evaluate, report; ``all`` runs them in order. Artifacts land under
``<run_root>/<config-hash>/<stage>/``; the BIASWAP_RUN_ROOT environment
variable overrides the configured run root. Exit status is 0 on success and 1
on failure (the failing stage is named on stderr).
"""
from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import STAGES, PipelineConfig, ablation_config, run_all, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biaswap", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("stage", choices=STAGES + ("all",), help="pipeline stage to run")
    parser.add_argument("--config", required=True, help="flat key-value config file")
    parser.add_argument("--force", action="store_true", help="rerun the stage even if complete")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--ablation", choices=("c1", "c2", "c1+c2"), default=None, help="apply an ablation variant")
    parser.add_argument("--oracle-swap", action="store_true", help="use the ground-truth recolor swap instead of the generator")
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    return parser


def resolve_config(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config = config.with_overrides({"seed": args.seed})
    if args.ablation is not None:
        config = ablation_config(config, args.ablation)
    if args.oracle_swap:
        config = config.with_overrides({"augment.oracle_swap": True})
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        config = resolve_config(args)
    except (OSError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1

    current = args.stage
    try:
        if args.stage == "all":
            for stage in STAGES:
                if stage == "swapae_train" and config["augment.oracle_swap"]:
                    continue
                current = stage
                run_stage(config, stage, force=args.force)
        else:
            run_stage(config, args.stage, force=args.force)
    except Exception as err:  # surface the failing stage, nonzero exit
        print(f"stage {current} failed: {err}", file=sys.stderr)
        return 1
    print(f"ok: {args.stage} (config {config.config_hash()}) -> {config.run_dir()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
