"""Both ablations on one config: bank size (k=2 vs k=c) and trace vs pseudo-label terms.

    python3 scripts/ablations.py [--config configs/default.yaml] [--out runs/ablations]
"""
import argparse
from pathlib import Path

from damc import runner
from damc.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def print_means(rows):
    for mode, series, seed, before, after in rows:
        if seed == "mean":
            print(f"  {series:<18} {100 * before:6.2f}% -> {100 * after:6.2f}%")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "default.yaml"))
    ap.add_argument("--out", default=str(ROOT / "runs" / "ablations"))
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out)

    rows, _ = runner.ablate_bi_vs_many(cfg)
    runner.write_csv(out / "ablation_bi_vs_many.csv", runner.ABLATION_HEADER, rows)
    print("bank size (mean target accuracy, source-only -> adapted):")
    print_means(rows)

    rows, curves, _ = runner.ablate_trace_vs_pseudo(cfg)
    runner.write_csv(out / "ablation_trace_vs_pseudo.csv", runner.ABLATION_HEADER, rows)
    runner.write_csv(out / "ablation_trace_vs_pseudo_curves.csv", ["series", "epoch", "mean_target_acc"], curves)
    print("loss terms:")
    print_means(rows)
    print(f"CSVs written to {out}")


if __name__ == "__main__":
    main()
