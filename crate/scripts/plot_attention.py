#!/usr/bin/env python3
"""Render the CSVs written by `timbre attend` as heatmaps.

usage: plot_attention.py WORK_DIR/attention/<stem> [out.png]

Needs numpy and matplotlib.
"""
import glob
import sys

import matplotlib.pyplot as plt
import numpy as np


def load(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    stem = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else stem + ".png"
    heads = sorted(glob.glob(stem + ".head*.csv"), key=lambda p: int(p.rsplit("head", 1)[1][:-4]))
    avg, act = load(stem + ".avg.csv"), load(stem + ".act.csv")

    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    axes[0].imshow(load(heads[0]), cmap="viridis")
    axes[0].set_title(f"head 0 of {len(heads)}")
    axes[1].imshow(avg, cmap="viridis")
    axes[1].set_title("head average")
    axes[2].imshow(act, cmap="magma", origin="lower", aspect="auto")
    axes[2].set_title("activation (mel bin x frame)")
    for ax in axes[:2]:
        ax.set_xlabel("key frame")
        ax.set_ylabel("query frame")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
