#!/usr/bin/env python3
"""Render convergence figures and solution heatmaps from cemflow run artifacts.

Reads only the documented artifact formats: results.csv (fixed column set),
plain-text snapshot matrices, and manifest.json for axis extents. No solver
coupling.

Usage:
  render.py --csv out/results.csv --kind error_vs_Nov_log --out fig.png
  render.py --csv a.csv --csv b.csv --label inflow --label outflow \
            --kind error_vs_H_loglog --column E_L --out cmp.png
  render.py --snapshot out/solution_steady_Nx40_Nov5.txt --kind heatmap --out u.png
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("error_vs_Nov_log", "error_vs_H_loglog", "heatmap")
# timestamps are suppressed so re-rendering is byte-identical
PNG_METADATA = {"Software": "cemflow-plots"}


class PlotError(ValueError):
    pass


def read_results(path):
    """Rows of a results.csv as dicts with numeric fields parsed."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [dict(r) for r in reader]
    if not rows:
        raise PlotError(f"{path}: no data rows")
    for row in rows:
        for key, val in row.items():
            if key in ("command", "scheme"):
                continue
            try:
                row[key] = float(val)
            except (TypeError, ValueError):
                row[key] = float("nan")
    return rows


def _check_columns(rows, needed):
    missing = [c for c in needed if c not in rows[0]]
    if missing:
        raise PlotError(f"missing columns: {', '.join(missing)}")


def _series(rows, group_key):
    groups = {}
    for row in rows:
        groups.setdefault(row[group_key], []).append(row)
    return dict(sorted(groups.items()))


def plot_error_vs_nov(ax, rows, column, label_prefix=""):
    _check_columns(rows, ("Nov", "H", column))
    for hval, grp in _series(rows, "H").items():
        grp = sorted(grp, key=lambda r: r["Nov"])
        x = [r["Nov"] for r in grp]
        y = [r[column] for r in grp]
        if not any(np.isfinite(y)):
            raise PlotError(f"series H={hval}: no finite {column} values")
        ax.semilogy(x, y, marker="o",
                    label=f"{label_prefix}H={hval:g}")
    ax.set_xlabel("oversampling layers")
    ax.set_ylabel(column)
    ax.grid(True, which="both", alpha=0.3)


def plot_error_vs_h(ax, rows, column, label_prefix=""):
    _check_columns(rows, ("Nov", "H", column))
    for nov, grp in _series(rows, "Nov").items():
        grp = sorted(grp, key=lambda r: -r["H"])
        x = [r["H"] for r in grp]
        y = [r[column] for r in grp]
        ax.loglog(x, y, marker="s", label=f"{label_prefix}Nov={int(nov)}")
    ax.set_xlabel("coarse mesh size H")
    ax.set_ylabel(column)
    ax.grid(True, which="both", alpha=0.3)


def plot_heatmap(ax, fig, snapshot_path):
    mat = np.loadtxt(snapshot_path)
    if mat.ndim != 2:
        raise PlotError(f"{snapshot_path}: expected a 2-D matrix")
    extent = (0.0, 1.0, 0.0, 1.0)
    manifest = Path(snapshot_path).parent / "manifest.json"
    if manifest.exists():
        info = json.loads(manifest.read_text())
        dom = info.get("domain")
        if dom and len(dom) == 4:
            extent = (dom[0], dom[1], dom[2], dom[3])
    im = ax.imshow(mat, origin="lower", extent=extent, aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")


def render(kind, csv_paths=(), labels=(), column="E_L", snapshot=None, out="figure.png",
           title=None):
    if kind not in KINDS:
        raise PlotError(f"unknown figure kind {kind!r}")
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if kind == "heatmap":
        if snapshot is None:
            raise PlotError("heatmap needs --snapshot")
        plot_heatmap(ax, fig, snapshot)
    else:
        if not csv_paths:
            raise PlotError("error plots need at least one --csv")
        labels = list(labels) + [""] * (len(csv_paths) - len(labels))
        for path, label in zip(csv_paths, labels):
            rows = read_results(path)
            prefix = f"{label} " if label else ""
            if kind == "error_vs_Nov_log":
                plot_error_vs_nov(ax, rows, column, prefix)
            else:
                plot_error_vs_h(ax, rows, column, prefix)
        ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out, dpi=130, metadata=PNG_METADATA)
    plt.close(fig)
    return Path(out)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--csv", action="append", default=[])
    parser.add_argument("--label", action="append", default=[])
    parser.add_argument("--snapshot", default=None)
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--column", default="E_L")
    parser.add_argument("--out", required=True)
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        render(args.kind, args.csv, args.label, args.column, args.snapshot,
               args.out, args.title)
    except (PlotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
