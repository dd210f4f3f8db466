"""Canonical JSON reports, delimited tables and SVG figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def canonical_json(payload: dict) -> str:
    """Sorted keys, fixed separators, trailing newline: equal payloads give equal bytes."""
    return json.dumps(_clean(payload), sort_keys=True, separators=(",", ":"), ensure_ascii=True) + "\n"


def write_report(out_dir: Path, command: str, config: dict, result: dict, meta: dict) -> Path:
    """``report.json`` holds the reproducible payload; run metadata goes to ``meta.json``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"schema_version": SCHEMA_VERSION, "command": command, "config": config, "result": result}
    path = out_dir / "report.json"
    path.write_text(canonical_json(payload))
    (out_dir / "meta.json").write_text(json.dumps(_clean(meta), sort_keys=True, indent=2) + "\n")
    return path


def read_report(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema_version {data.get('schema_version')!r}")
    return data


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


TAIL_HEADER = ("threshold", "empirical", "ci_low", "ci_high", "theory")
PLOT_HEADER = ("threshold", "empirical", "theory")


def write_tail_csv(path: Path, curve) -> Path:
    return write_csv(path, TAIL_HEADER, curve.rows())


def write_plot_csv(path: Path, thresholds, empirical, theory) -> Path:
    return write_csv(path, PLOT_HEADER, zip(thresholds, empirical, theory))


# ------------------------------------------------------------------ figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(
        {
            "svg.hashsalt": "lpdev",
            "svg.fonttype": "none",
            "font.size": 9,
            "axes.grid": True,
            "grid.alpha": 0.3,
            "lines.linewidth": 1.2,
            "lines.markersize": 3,
            "figure.figsize": (4.8, 3.2),
        }
    )
    return plt


def _finite(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    keep = np.isfinite(xs) & np.isfinite(ys) & (ys > 0)
    return xs[keep], ys[keep]


def tail_figure(path: Path, curves: dict, title: str = "") -> Path:
    """Empirical exceedance (markers) against the theoretical envelope (line) on a log y-axis.

    ``curves`` maps a legend label to a TailCurve.
    """
    plt = _pyplot()
    fig, ax = plt.subplots()
    for label, c in curves.items():
        x, y = _finite(c.thresholds, c.empirical_prob)
        (line,) = ax.plot(x, y, "o", label=f"{label} empirical")
        if c.theory is not None:
            x, y = _finite(c.thresholds, c.theory)
            ax.plot(x, y, "-", color=line.get_color(), alpha=0.7, label=f"{label} bound")
    ax.set_yscale("log")
    ax.set_xlabel("threshold s")
    ax.set_ylabel("P(Z >= s)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=6, loc="best")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def series_figure(path: Path, series: dict, xlabel: str, ylabel: str, title: str = "", loglog: bool = True) -> Path:
    """One marker line per entry of ``series`` (label -> (xs, ys))."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    for label, (xs, ys) in series.items():
        x, y = _finite(xs, ys)
        ax.plot(x, y, "o-", label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=6, loc="best")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def histogram_figure(path: Path, values, bounds: Sequence[float], xlabel: str, title: str = "") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots()
    ax.hist(np.asarray(values, float), bins=60, color="#2b8cbe", alpha=0.8)
    for b in bounds:
        ax.axvline(b, color="#d7301f", linestyle="--")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("pairs")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
