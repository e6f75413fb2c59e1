#!/usr/bin/env python3
"""Box plots of one metric column across several per_sample.csv reports."""

import argparse
import csv
import math
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def column(path: pathlib.Path, metric: str) -> list[float]:
    with path.open(newline="") as f:
        values = [float(row[metric]) for row in csv.DictReader(f)]
    return [v for v in values if math.isfinite(v)]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("reports", nargs="+", type=pathlib.Path, help="per_sample.csv files")
    parser.add_argument("--metric", required=True, help="column name, e.g. local_psnr or dice")
    parser.add_argument("--labels", nargs="*", help="one label per report (defaults to parent directory names)")
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("boxplot.png"))
    args = parser.parse_args()

    labels = args.labels or [p.parent.name for p in args.reports]
    if len(labels) != len(args.reports):
        parser.error("--labels must match the number of reports")
    data = [column(p, args.metric) for p in args.reports]
    fig, ax = plt.subplots(figsize=(1.6 * len(data) + 2, 4))
    ax.boxplot(data)
    ax.set_xticks(range(1, len(labels) + 1), labels, rotation=20)
    ax.set_ylabel(args.metric)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
