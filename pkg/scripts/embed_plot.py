"""Scatter plot of an embedding.csv written by ``damc run`` or ``damc embed``.

    python3 scripts/embed_plot.py runs/default/embedding.csv --seed 0 --out embedding.png

Needs matplotlib, which the package itself does not depend on.
"""
import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--seed", help="keep only this seed (files from `damc run` hold several)")
    ap.add_argument("--out", default="embedding.png")
    args = ap.parse_args()
    with open(args.csv, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if args.seed is None or r.get("seed") == args.seed]
    fig, ax = plt.subplots(figsize=(6, 6))
    for domain, marker in (("source", "o"), ("target", "x")):
        pts = [r for r in rows if r["domain"] == domain]
        ax.scatter([float(r["x"]) for r in pts], [float(r["y"]) for r in pts],
                   c=[int(r["label"]) for r in pts], cmap="tab10", vmin=0, vmax=9,
                   marker=marker, s=10, label=domain)
    ax.legend()
    ax.set_title("PCA of generator features")
    fig.savefig(args.out, dpi=120, bbox_inches="tight")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
