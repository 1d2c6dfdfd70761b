import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pgra.plotting import displacement_colors, embedding_scatter_svg, learning_curve_svg, pca_2d

NS = "{http://www.w3.org/2000/svg}"


def test_colors_normalised():
    c = displacement_colors([[-1, 0], [1, 0], [0, 2]])
    np.testing.assert_allclose(c[:, 0], [0, 1, 0.5])
    np.testing.assert_allclose(c[:, 1], [0, 0, 1])
    np.testing.assert_allclose(c[:, 2], 0.5)


def test_constant_axis_maps_to_half():
    c = displacement_colors([[0, 1], [0, 1]])
    np.testing.assert_allclose(c, 0.5)


def test_scatter_one_circle_per_action(tmp_path):
    reps = np.random.default_rng(0).uniform(-1, 1, (2, 10))
    out = embedding_scatter_svg(reps, np.zeros((10, 2)), tmp_path / "s.svg")
    root = ET.parse(out).getroot()
    circles = root.findall(f".//{NS}circle")
    assert len(circles) == 10
    assert [int(c.get("data-action")) for c in circles] == list(range(10))


def test_scatter_needs_projection_for_higher_dims(tmp_path):
    reps = np.random.default_rng(0).uniform(-1, 1, (3, 5))
    with pytest.raises(ValueError, match="project"):
        embedding_scatter_svg(reps, np.zeros((5, 2)), tmp_path / "s.svg")
    embedding_scatter_svg(reps, np.zeros((5, 2)), tmp_path / "s.svg", project="pca")


def test_pca_preserves_planar_data():
    X = np.random.default_rng(1).normal(size=(2, 30))
    P = pca_2d(np.vstack([X, np.zeros((1, 30))]))
    Xc = X - X.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(np.linalg.norm(P, axis=0), np.linalg.norm(Xc, axis=0), atol=1e-12)


def test_learning_curve(tmp_path):
    out = learning_curve_svg(np.arange(5.0), np.ones(5), tmp_path / "c.svg", label="3 runs")
    text = out.read_text()
    ET.fromstring(text)
    assert 'class="band"' in text and "3 runs" in text
    assert len(re.search(r'class="mean" points="([^"]+)"', text).group(1).split()) == 5
