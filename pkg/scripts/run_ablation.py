"""MD / MDR / MDRR ablation on a <root>/<label>/*.wav corpus over several seeds.

Writes one CSV row per (seed, variant) plus a per-variant mean summary.
"""

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from mdrr.classifier import PipelineConfig
from mdrr.evaluation import run_ablation

sys.path.insert(0, str(Path(__file__).parent))
from _data import labeled_splits, load_features  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root")
    ap.add_argument("--dataset", default=None, help="name for the dataset column (default: directory name)")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="ablation.csv")
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    name = a.dataset or Path(a.root).name

    t0 = time.time()
    manifest, feats = load_features(a.root)
    print(f"{len(manifest.entries)} clips, {len(manifest.class_counts)} classes, features in {time.time() - t0:.0f}s")

    rows = []
    for seed in a.seeds:
        base = PipelineConfig()
        cfg = replace(base, autoencoder=replace(base.autoencoder, seed=seed), classifier=replace(base.classifier, seed=seed))
        for r in run_ablation(labeled_splits(manifest, feats, seed), cfg, dataset=name):
            vals = r.report.row() if r.report else [float("nan")] * 3
            rows.append([seed, r.variant, name, *vals])
            print(f"seed {seed} {r.variant:5s} precision {vals[0]:.4f} recall {vals[1]:.4f} accuracy {vals[2]:.4f}")

    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "variant", "dataset", "precision", "recall", "accuracy"])
        w.writerows(rows)
    for v in ("MD", "MDR", "MDRR"):
        acc = [r[5] for r in rows if r[1] == v]
        print(f"{v:5s} mean accuracy {np.nanmean(acc):.4f} over {len(acc)} seeds")
    print(f"wrote {a.out} ({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
