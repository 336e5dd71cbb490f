"""Learning curves from per-seed JSONL logs or an aggregate CSV."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import FpgError  # noqa: E402

# aggregate.csv column prefixes for each record metric
_CSV_METRIC = {"success_rate": "success", "visitation_entropy": "entropy"}


class EmptyInputError(FpgError, ValueError):
    pass


def _read_series(path: Path, metric: str):
    """``(label, x, mean, std or None)`` for one input file."""
    if path.suffix == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise EmptyInputError(f"{path}: no rows to plot")
        key = _CSV_METRIC.get(metric)
        if key is None:
            raise ValueError(f"aggregate CSV has no column for {metric!r}")
        x = np.array([float(r["iteration"]) for r in rows])
        return path.stem, x, np.array([float(r[f"mean_{key}"]) for r in rows]), \
            np.array([float(r[f"std_{key}"]) for r in rows])
    with path.open(encoding="utf-8") as fh:
        recs = [json.loads(line) for line in fh if line.strip()]
    if not recs:
        raise EmptyInputError(f"{path}: no records to plot")
    recs = [r for r in recs if r.get(metric) is not None]
    if not recs:
        raise EmptyInputError(f"{path}: no {metric!r} values to plot")
    label = f"{recs[0].get('learner', path.stem)} seed {recs[0].get('seed', '?')}"
    return label, np.array([r["iter"] for r in recs], float), np.array([r[metric] for r in recs], float), None


def plot_learning_curves(inputs, out, metric: str = "success_rate", title: str | None = None) -> Path:
    """Write an SVG with one curve per input (shaded +-1 std for aggregates)."""
    paths = [Path(p) for p in inputs]
    if not paths:
        raise EmptyInputError("no input files given")
    series = [_read_series(p, metric) for p in paths]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for label, x, y, sd in series:
        (line,) = ax.plot(x, y, lw=1.4, label=label)
        if sd is not None:
            ax.fill_between(x, y - sd, y + sd, color=line.get_color(), alpha=0.2, lw=0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(metric.replace("_", " "))
    if metric == "success_rate":
        ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, frameon=False)
    ax.spines[["top", "right"]].set_visible(False)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "fpg", "svg.fonttype": "none"}):
        fig.savefig(out, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return out
