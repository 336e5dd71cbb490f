"""Grid heatmaps of visitation densities and learning signals.

Rendered with matplotlib's SVG backend.  The colour range is written into
the SVG metadata (``<dc:description>``) as ``vmin=... vmax=...`` and the
cell values can be exported alongside as a CSV matrix.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap, Normalize  # noqa: E402

from ..errors import ShapeError  # noqa: E402
from ..learner import fprime_signal  # noqa: E402
from ..visitation import DiscreteVisitation, GoalDensity, KdeVisitation  # noqa: E402

WALL_COLOR = "#3b3b3b"


def as_grid(field, layout) -> np.ndarray:
    """``(height, width)`` array from a model, a flat vector or a grid."""
    if isinstance(field, DiscreteVisitation):
        field = field.probs
    elif isinstance(field, GoalDensity):
        field = field.table()
    elif isinstance(field, KdeVisitation):
        field = kde_grid(field, layout)
    arr = np.asarray(field, dtype=float)
    H, W = layout.height, layout.width
    if arr.ndim == 1:
        if arr.size != H * W:
            raise ShapeError(f"field has {arr.size} values, layout has {H * W} cells")
        return arr.reshape(H, W)
    if arr.shape != (H, W):
        raise ShapeError(f"field shape {arr.shape} does not match layout {(H, W)}")
    return arr


def kde_grid(model, layout, per_cell: int = 4) -> np.ndarray:
    """Mean density of a 2-D model over each unit cell (``per_cell^2`` probes)."""
    offs = (np.arange(per_cell) + 0.5) / per_cell
    xs = (np.arange(layout.width)[:, None] + offs[None, :]).reshape(-1)
    ys = (np.arange(layout.height)[:, None] + offs[None, :]).reshape(-1)
    X, Y = np.meshgrid(xs, ys)
    vals = model.query(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(len(ys), len(xs))
    return vals.reshape(layout.height, per_cell, layout.width, per_cell).mean(axis=(1, 3))


def signal_field(spec, p_theta, p_g) -> np.ndarray:
    """``f'(p_theta(s) / p_g(s))`` for every entry of two same-shape fields."""
    p = np.asarray(p_theta, dtype=float)
    q = np.asarray(p_g, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"visitation {p.shape} and goal density {q.shape} differ in shape")
    return fprime_signal(spec, p, q)


def write_grid_csv(grid, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in np.asarray(grid):
            w.writerow([repr(float(v)) for v in row])
    return path


def emit_heatmap(field, layout, path, title: str | None = None, cmap: str = "viridis",
                 markers: bool = True, csv_path=None) -> np.ndarray:
    """Render ``field`` over ``layout`` to an SVG file.

    The colour range covers the free cells only; walls are painted over in
    a flat grey and start / goal cells get markers.  Returns the
    ``(height, width, 4)`` RGBA colours assigned to the field values.
    """
    grid = as_grid(field, layout)
    walls = layout.wall_mask()
    vals = grid[~walls & np.isfinite(grid)]
    vmin, vmax = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    # a constant field maps to the middle of the colour map
    norm = Normalize(vmin, vmax) if vmax > vmin else Normalize(vmin - 0.5, vmin + 0.5)
    colormap = plt.get_cmap(cmap)
    shown = np.where(np.isfinite(grid), grid, vmin)
    colors = colormap(norm(shown))

    H, W = grid.shape
    fig, ax = plt.subplots(figsize=(0.25 * W + 1.6, 0.25 * H + 0.6))
    ax.pcolormesh(np.arange(W + 1), np.arange(H + 1), shown, cmap=colormap, norm=norm)
    ax.pcolormesh(np.arange(W + 1), np.arange(H + 1), np.ma.masked_where(~walls, np.ones_like(grid)),
                  cmap=ListedColormap([WALL_COLOR]), vmin=0, vmax=1)
    if markers:
        for (x, y) in layout.cells("S"):
            ax.plot(x + 0.5, y + 0.5, "o", ms=5, mfc="white", mec="black", mew=0.6)
        for (x, y) in layout.cells("G"):
            ax.plot(x + 0.5, y + 0.5, "*", ms=8, mfc="#ff4040", mec="black", mew=0.5)
    ax.set_xlim(0, W)
    ax.set_ylim(H, 0)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=8)
    sm = plt.cm.ScalarMappable(norm=norm, cmap=colormap)
    cbar = fig.colorbar(sm, ax=ax, fraction=0.046, pad=0.04)
    cbar.ax.tick_params(labelsize=6)
    # matplotlib rasterises long colour bars; keep the file pure vector
    if cbar.solids is not None:
        cbar.solids.set_rasterized(False)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "fpg", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", bbox_inches="tight",
                    metadata={"Title": title or path.stem, "Date": None,
                              "Description": f"vmin={vmin!r} vmax={vmax!r}"})
    plt.close(fig)
    if csv_path is not None:
        write_grid_csv(grid, csv_path)
    return colors


def read_color_range(svg_path) -> tuple[float, float]:
    """``(vmin, vmax)`` recorded by :func:`emit_heatmap`."""
    text = Path(svg_path).read_text(encoding="utf-8")
    m = re.search(r"vmin=([^\s<]+) vmax=([^\s<]+)", text)
    if m is None:
        raise ValueError(f"{svg_path}: no colour range in metadata")
    return float(m.group(1)), float(m.group(2))
