import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from dscope import metrics, svg

GOLDEN = Path(__file__).parent / "golden" / "scatter10.svg"
NS = "{http://www.w3.org/2000/svg}"


def fixture_points():
    coords = np.array(
        [[0.0, 0.0], [1.0, 0.5], [-1.0, 2.0], [0.25, -0.75], [2.0, 2.0],
         [-0.5, -0.5], [1.5, -1.0], [0.0, 1.0], [-2.0, 0.0], [0.75, 0.25]]
    )
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 3])
    return coords, labels


def circles(doc: str):
    root = ET.fromstring(doc.split("\n", 1)[1])
    return root.findall(f"{NS}circle")


def test_single_point_sits_at_viewport_center():
    (c,) = circles(svg.render_scatter([[0.0, 0.0]], [5]))
    assert (c.get("cx"), c.get("cy")) == ("400.00", "400.00")


def test_extent_has_five_percent_margin():
    cs = circles(svg.render_scatter([[0.0, 0.0], [10.0, 20.0]], [0, 1]))
    xs = sorted(float(c.get("cx")) for c in cs)
    # 800 * 0.05 / 1.1 from each edge
    assert xs[0] == pytest.approx(800 * 0.05 / 1.1, abs=0.01)
    assert xs[1] == pytest.approx(800 - 800 * 0.05 / 1.1, abs=0.01)


def test_color_count_matches_label_count():
    coords, labels = fixture_points()
    fills = {c.get("fill") for c in circles(svg.render_scatter(coords, labels))}
    assert len(fills) == len(set(labels.tolist()))


def test_many_labels_get_distinct_colors():
    n = 25
    colors = svg.label_colors(range(n))
    assert len(set(colors.values())) == n


def test_empty_input_renders_no_data():
    doc = svg.render_scatter(np.empty((0, 2)), [])
    root = ET.fromstring(doc.split("\n", 1)[1])
    assert len(root) == 1 and root[0].text == "no data"


def test_non_finite_coords_rejected():
    with pytest.raises(ValueError):
        svg.render_scatter([[np.nan, 0.0]], [0])


def test_scatter_is_valid_svg_with_fixed_viewport():
    coords, labels = fixture_points()
    doc = svg.render_scatter(coords, labels)
    root = ET.fromstring(doc.split("\n", 1)[1])
    assert root.get("version") == "1.1"
    assert (root.get("width"), root.get("height")) == ("800", "800")


def test_golden_scatter():
    coords, labels = fixture_points()
    assert svg.render_scatter(coords, labels) == GOLDEN.read_text()


def test_density_ramp_is_monotone():
    ts = np.linspace(0, 1, 101)
    rgb = np.array([[int(svg.ramp_color(t)[i : i + 2], 16) for i in (1, 3, 5)] for t in ts])
    assert np.all(np.diff(rgb, axis=0) <= 0)
    assert svg.ramp_color(0.0) == "#ffffff"


def test_density_heatmap_has_one_rect_per_cell():
    grid = metrics.kde2d(np.random.default_rng(0).normal(size=(50, 2)), g=16)
    doc = svg.render_density(grid, title="demo")
    assert len(re.findall("<rect ", doc)) == 16 * 16
    assert doc == svg.render_density(grid, title="demo")
