"""SVG learning curves: median line with a min-max band across seeds."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .harness import MetricSeries, median_envelope
from .io import read_metrics

_SEED_SUFFIX = re.compile(r"_seed(\d+)$")


def series_from_dirs(run_dirs) -> dict[str, MetricSeries]:
    """Group run directories ``<name>_seed<k>`` into one series per name."""
    out: dict[str, MetricSeries] = {}
    for d in run_dirs:
        d = Path(d)
        m = _SEED_SUFFIX.search(d.name)
        name = d.name[:m.start()] if m else d.name
        rows = read_metrics(d / "metrics.csv")
        if not rows:
            continue
        seed = rows[0]["seed"]
        out.setdefault(name, MetricSeries(name)).add(seed, rows)
    return out


def curve(series: MetricSeries) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    med, lo, hi = median_envelope(series.rmse_matrix())
    return series.labelled(), med, lo, hi


def plot_emit(series: dict[str, MetricSeries] | list[MetricSeries], path, logy: bool = False,
              title: str | None = None) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    items = list(series.values()) if isinstance(series, dict) else list(series)
    items = [s for s in items if s.curves]
    if not items:
        raise ValueError("nothing to plot: no series with at least one seed")
    fig, ax = plt.subplots(figsize=(6, 4))
    for s in items:
        x, med, lo, hi = curve(s)
        (line,) = ax.plot(x, med, label=s.name, linewidth=1.5)
        ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("labelled samples")
    ax.set_ylabel("RMSE")
    if logy:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_plan(dump, path, example: int = 0) -> Path:
    """One panel per weighted preturn plus the combined prediction."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    layers = dump.layers[example]
    panels = list(layers) + [dump.g_lambda[example]]
    titles = [f"k={k}" for k in range(len(layers))] + ["g_lambda"]
    if dump.targets is not None:
        panels.append(dump.targets[example])
        titles.append("target")
    fig, axes = plt.subplots(1, len(panels), figsize=(1.6 * len(panels), 1.8))
    for ax, img, t in zip(np.atleast_1d(axes), panels, titles):
        ax.imshow(img, vmin=0, vmax=1, cmap="gray_r")
        ax.set_title(t, fontsize=7)
        ax.axis("off")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
