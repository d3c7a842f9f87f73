#!/usr/bin/env python3
"""Turn a plotdata CSV into log-log convergence plots (one PNG per metric)."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("plotdata", help="plotdata.csv emitted by 'uqid run'")
    ap.add_argument("--out-dir", default=".", help="where to write the PNGs")
    args = ap.parse_args()

    series = defaultdict(list)  # (metric, mode, theta) -> [(n, med, q25, q75)]
    with open(args.plotdata, newline="") as fh:
        for row in csv.DictReader(fh):
            series[(row["metric"], row["mode"], row["theta"])].append(
                (int(row["n"]), float(row["median"]), float(row["q25"]), float(row["q75"]))
            )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = sorted({m for m, _, _ in series})
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(5, 4))
        for (m, mode, theta), pts in sorted(series.items()):
            if m != metric:
                continue
            pts.sort()
            n = np.array([p[0] for p in pts], dtype=float)
            med = np.array([p[1] for p in pts])
            q25 = np.array([p[2] for p in pts])
            q75 = np.array([p[3] for p in pts])
            if np.any(med <= 0):
                continue
            ax.fill_between(n, np.maximum(q25, 1e-12), q75, alpha=0.2)
            ax.loglog(n, med, "o-", label=f"{mode} theta={theta}")
        ref = np.array(sorted({p[0] for pts in series.values() for p in pts}), dtype=float)
        scale = next(
            (pts[0][1] * np.sqrt(np.log(pts[0][0]) / pts[0][0]) ** -1
             for (m, _, _), pts in sorted(series.items()) if m == metric and pts[0][1] > 0),
            None,
        )
        if scale:
            ax.loglog(ref, scale * np.sqrt(np.log(ref) / ref), "k--", lw=1,
                      label="sqrt(log n / n) reference")
        ax.set_xlabel("block length n")
        ax.set_ylabel(f"median {metric}")
        ax.legend(fontsize=7)
        fig.tight_layout()
        target = out_dir / f"{metric}_vs_n.png"
        fig.savefig(target, dpi=150)
        print(f"wrote {target}")


if __name__ == "__main__":
    main()
