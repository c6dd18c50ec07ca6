import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.errors import OutOfChart, RankDeficient
from utils.grassmann import (
    Chart,
    all_charts,
    best_chart,
    chart_margin,
    charts_for,
    coordinates,
    fs_distance,
    linkable,
    principal_angles,
    projector_from_coordinates,
    projector_from_frame,
    projector_from_real,
    random_projector,
    random_projector_near,
    real_coordinates,
)


def line(theta):
    return projector_from_frame(np.array([[np.cos(theta)], [np.sin(theta)]]))


def test_projector_from_frame_is_an_orthogonal_projector():
    p = random_projector(5, 2, seed=1)
    residuals = p.residuals()
    assert residuals["idempotency"] < 1e-12
    assert residuals["hermiticity"] < 1e-12
    assert residuals["trace"] < 1e-12
    assert np.allclose(p.frame.conj().T @ p.frame, np.eye(2))


def test_rank_deficient_frame():
    z = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(RankDeficient):
        projector_from_frame(z)


def test_fs_distance_of_lines():
    theta = 0.4
    p, q = line(0.0), line(theta)
    assert fs_distance(p, p) == pytest.approx(0.0, abs=1e-12)
    assert fs_distance(p, q, squared=False) == pytest.approx(theta, abs=1e-12)
    assert fs_distance(p, q) == pytest.approx(np.arccos(np.cos(theta) ** 2), abs=1e-12)
    assert fs_distance(p, q) == pytest.approx(fs_distance(q, p), abs=1e-14)


def test_orthogonal_lines_are_not_linkable():
    p, q = line(0.0), line(np.pi / 2)
    assert fs_distance(p, q) == pytest.approx(np.pi / 2)
    assert not linkable(p, q)
    assert linkable(p, line(1.0))


def test_fs_distance_rejects_rank_mismatch():
    with pytest.raises(ValueError):
        fs_distance(random_projector(4, 1, 0), random_projector(4, 2, 0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1), radius=st.floats(min_value=0.05, max_value=1.2))
def test_random_projector_near_stays_within_radius(seed, radius):
    p = random_projector(4, 2, seed)
    q = random_projector_near(p, radius, seed + 1)
    assert fs_distance(p, q) < radius


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_chart_coordinates_recover_the_projector(seed):
    p = random_projector(5, 2, seed)
    chart = best_chart(p)
    assert chart_margin(chart, p) > 0.0
    back = projector_from_coordinates(chart, coordinates(chart, p))
    assert np.allclose(back.matrix, p.matrix, atol=1e-10)
    again = projector_from_real(chart, real_coordinates(chart, p))
    assert np.allclose(again.matrix, p.matrix, atol=1e-10)


def test_out_of_chart():
    e1 = projector_from_frame(np.array([[0.0], [1.0]]))
    with pytest.raises(OutOfChart) as info:
        coordinates(Chart((0,), 2), e1)
    assert info.value.chart == Chart((0,), 2)
    assert charts_for(e1, all_charts(2, 1)) == [Chart((1,), 2)]


def test_chart_structure():
    charts = all_charts(4, 2)
    assert len(charts) == 6
    chart = Chart((2, 0), 4)
    assert chart.index_set == (0, 2)
    assert chart.complement == (1, 3)
    assert chart.coord_shape == (2, 2)
    assert chart.coord_dim == 8
    assert chart.label == "{0,2}"
    assert np.allclose(coordinates(chart, chart.reference_projector()), 0.0)
    with pytest.raises(ValueError):
        Chart((0, 4), 4)
    with pytest.raises(ValueError):
        Chart((1, 1), 4)


def test_principal_angles_of_a_projector_with_itself():
    p = random_projector(6, 3, seed=4)
    assert np.allclose(principal_angles(p, p), 0.0, atol=1e-7)
