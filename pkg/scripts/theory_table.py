"""Disagreement ratio of a random k-head bank over c classes: exact, enumerated, sampled.

    python3 scripts/theory_table.py [--c-max 12] [--k-max 12] [--out runs/theory.csv]
"""
import argparse
from pathlib import Path

from damc import runner


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--c-max", type=int, default=12)
    ap.add_argument("--k-max", type=int, default=12)
    ap.add_argument("--mc-samples", type=int, default=100_000)
    ap.add_argument("--out", help="also write the table to this CSV file")
    args = ap.parse_args()
    text = runner.theory_table(args.c_max, args.k_max, args.mc_samples)
    print(text, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")


if __name__ == "__main__":
    main()
