"""Command line entry point: ``damc {run,theory,ablate,embed}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import runner
from .config import ConfigError, ExperimentConfig, load_config
from .data import DomainPair, IdxError, Standardizer, load_idx
from .pipeline import CheckpointError, NonFiniteLossError

log = logging.getLogger("damc")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

OUTPUT_ENV = "DAMC_OUTPUT_DIR"


def _output_dir(args, cfg: ExperimentConfig | None) -> Path:
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    if cfg is None:
        return Path(".")
    return cfg.resolve(cfg.output_dir)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _output_dir(args, cfg)
    results = runner.run(cfg, out)
    for r in results:
        print(f"seed {r.seed}: target acc {r.source_only_target_acc:.4f} -> {r.adapted_target_acc:.4f}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_theory(args) -> int:
    sys.stdout.write(runner.theory_table(args.c_max, args.k_max, args.mc_samples, args.mc_seed))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load(args)
    out = _output_dir(args, cfg)
    if args.mode == "bi_vs_many":
        rows, _ = runner.ablate_bi_vs_many(cfg)
    else:
        rows, curves, _ = runner.ablate_trace_vs_pseudo(cfg)
        runner.write_csv(out / "ablation_trace_vs_pseudo_curves.csv",
                         ["series", "epoch", "mean_target_acc"], curves)
    path = out / f"ablation_{args.mode}.csv"
    runner.write_csv(path, runner.ABLATION_HEADER, rows)
    sys.stdout.write(runner.csv_text(runner.ABLATION_HEADER, rows))
    return EXIT_OK


def cmd_embed(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        pair = runner.prepare_domains(cfg)
    else:
        paths = (args.source_images, args.source_labels, args.target_images, args.target_labels)
        if not all(paths):
            raise ConfigError("embed needs --config or all four IDX paths")
        cfg = None
        src = load_idx(args.source_images, args.source_labels, args.classes, "source")
        tgt = load_idx(args.target_images, args.target_labels, args.classes, "target")
        st = Standardizer.fit(src.X)
        pair = DomainPair(src.with_X(st(src.X)), tgt.with_X(st(tgt.X)))
    rows = runner.embed_checkpoint(Path(args.checkpoint), pair.source, pair.target)
    out = Path(args.out) if args.out else _output_dir(args, cfg) / "embedding.csv"
    runner.write_csv(out, runner.EMBED_HEADER, rows)
    print(f"wrote {len(rows)} points to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="damc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("config", help="YAML experiment config")
        p.add_argument("--output-dir", help=f"overrides ${OUTPUT_ENV} and the config's output_dir")
        p.add_argument("--seed", type=int, help="run this single seed instead of the config's list")

    p = sub.add_parser("run", help="pre-train, select, adapt and write all artifacts")
    config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("theory", help="print the disagreement-ratio table as CSV")
    p.add_argument("--c-max", type=int, default=12)
    p.add_argument("--k-max", type=int, default=12)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--mc-seed", type=int, default=0)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("ablate", help="bank-size or loss-term ablation")
    config_args(p)
    p.add_argument("--mode", choices=("bi_vs_many", "trace_vs_pseudo"), required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("embed", help="2-D PCA of generator features from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="regenerate/load the domains from this config")
    p.add_argument("--source-images")
    p.add_argument("--source-labels")
    p.add_argument("--target-images")
    p.add_argument("--target-labels")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--out", help="output CSV (default: <output dir>/embedding.csv)")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_embed)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (IdxError, CheckpointError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except NonFiniteLossError as exc:
        log.error("numeric abort: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
