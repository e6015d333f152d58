import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predictron.harness import MetricSeries, PlanDump
from predictron.io import MetricsWriter
from predictron.plots import curve, plot_emit, plot_plan, series_from_dirs


def make_series(name, table):
    s = MetricSeries(name)
    for seed, vals in enumerate(table):
        s.add(seed, [{"step": i + 1, "labelled_samples": 32 * (i + 1), "seed": seed, "rmse": v,
                      "loss": 0.0, "wall_ms": 0.0} for i, v in enumerate(vals)])
    return s


@given(st.integers(1, 5), st.integers(1, 6), st.data())
def test_curve_median_matches_sort_oracle(n_seeds, n_points, data):
    table = [[data.draw(st.floats(0, 10)) for _ in range(n_points)] for _ in range(n_seeds)]
    x, med, lo, hi = curve(make_series("a", table))
    assert x.tolist() == [32 * (i + 1) for i in range(n_points)]
    for j in range(n_points):
        col = sorted(row[j] for row in table)
        mid = n_seeds // 2
        expect = col[mid] if n_seeds % 2 else (col[mid - 1] + col[mid]) / 2
        assert med[j] == pytest.approx(expect) and lo[j] == col[0] and hi[j] == col[-1]


def test_single_seed_band_collapses_onto_line():
    _, med, lo, hi = curve(make_series("a", [[0.4, 0.3, 0.2]]))
    assert med.tolist() == lo.tolist() == hi.tolist()


@settings(max_examples=5)
@given(st.booleans())
def test_svg_is_well_formed(tmp_path_factory, logy):
    path = tmp_path_factory.mktemp("svg") / "c.svg"
    series = {"a": make_series("a", [[0.5, 0.4], [0.6, 0.3]]), "b": make_series("b", [[0.7, 0.2]])}
    plot_emit(series, path, logy=logy, title="t")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    text = "".join(root.itertext())
    assert "a" in text and "b" in text


def test_empty_input_is_an_error(tmp_path):
    with pytest.raises(ValueError):
        plot_emit({}, tmp_path / "x.svg")
    with pytest.raises(ValueError):
        plot_emit([MetricSeries("empty")], tmp_path / "x.svg")


def test_series_from_dirs_groups_seeds(tmp_path):
    for name, seed in (("cfg", 0), ("cfg", 1), ("other", 0)):
        d = tmp_path / f"{name}_seed{seed}"
        d.mkdir()
        with MetricsWriter(d / "metrics.csv") as w:
            w.write({"step": 1, "labelled_samples": 32, "seed": seed, "rmse": 0.5 + seed, "loss": 0.1,
                     "wall_ms": 0.0})
    series = series_from_dirs(sorted(tmp_path.iterdir()))
    assert sorted(series) == ["cfg", "other"]
    assert series["cfg"].seeds == [0, 1] and series["cfg"].final_median() == 1.0


def test_plan_plot(tmp_path):
    rng = np.random.default_rng(0)
    dump = PlanDump(rng.random((1, 3, 5, 5)), rng.random((1, 5, 5)), rng.random((1, 5, 5)))
    ET.parse(plot_plan(dump, tmp_path / "p.svg"))
