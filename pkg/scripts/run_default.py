"""Pre-train, select, adapt and write every artifact for the bundled config.

    python3 scripts/run_default.py [--config configs/default.yaml] [--out runs/default]
"""
import argparse
from pathlib import Path

import numpy as np

from damc import runner
from damc.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "default.yaml"))
    ap.add_argument("--out", default=str(ROOT / "runs" / "default"))
    args = ap.parse_args()

    cfg = load_config(args.config)
    results = runner.run(cfg, Path(args.out))
    for r in results:
        print(f"seed {r.seed}: epoch {r.selected_epoch} selected, source {r.source_acc:.4f}, "
              f"target {r.source_only_target_acc:.4f} -> {r.adapted_target_acc:.4f}")
    before = np.mean([r.source_only_target_acc for r in results])
    after = np.mean([r.adapted_target_acc for r in results])
    print(f"mean target accuracy {100 * before:.2f}% -> {100 * after:.2f}% ({100 * (after - before):+.2f} points)")


if __name__ == "__main__":
    main()
