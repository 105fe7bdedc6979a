#!/usr/bin/env python3
"""Plots the CSV tables written by the aoilab CLI.

usage: plot_results.py rmse|age|ratio <csv> [--out figure.png]
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def plot_rmse(rows, ax):
    # One bar group per (p, q) setting, one bar per estimator/mode.
    settings = sorted({(float(r["p"]), float(r["q"])) for r in rows}, key=lambda s: (s[1], s[0]))
    series = defaultdict(dict)
    for r in rows:
        label = f'{r["estimator"]} ({r["age_mode"]}, {r["network_mode"]})'
        series[label][(float(r["p"]), float(r["q"]))] = float(r["rmse_total"])
    width = 0.8 / max(1, len(series))
    for k, (label, values) in enumerate(sorted(series.items())):
        xs = [i + k * width for i in range(len(settings))]
        ax.bar(xs, [values.get(s, float("nan")) for s in settings], width, label=label)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(settings))])
    ax.set_xticklabels([f"({p:g}, {q:g})" for p, q in settings], rotation=30)
    ax.set_xlabel("(p, q)")
    ax.set_ylabel("RMSE")
    ax.set_yscale("log")
    ax.legend(fontsize="small")


def plot_age(rows, ax):
    curves = defaultdict(lambda: defaultdict(list))
    for r in rows:
        curves[float(r["q"])][float(r["p"])].append(float(r["mean_age"]))
    for q, by_p in sorted(curves.items()):
        ps = sorted(by_p)
        ax.plot([p / q for p in ps], [sum(by_p[p]) / len(by_p[p]) for p in ps], "o-", label=f"q = {q:g}")
    ax.set_xlabel("utilization p/q")
    ax.set_ylabel("average age (slots)")
    ax.set_yscale("log")
    ax.legend()


def plot_ratio(rows, ax):
    labels = [f'({float(r["p"]):g}, {float(r["q"]):g})' for r in rows]
    ax.bar(labels, [float(r["ratio"]) for r in rows])
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xlabel("(p, q)")
    ax.set_ylabel("RMSE fixed / RMSE time-varying")
    ax.tick_params(axis="x", rotation=30)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("kind", choices=["rmse", "age", "ratio"])
    ap.add_argument("csv")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(8, 4.5))
    {"rmse": plot_rmse, "age": plot_age, "ratio": plot_ratio}[args.kind](read(args.csv), ax)
    fig.tight_layout()
    fig.savefig(args.out or args.csv.rsplit(".", 1)[0] + ".png", dpi=150)


if __name__ == "__main__":
    main()
