import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.connection import (
    ENFORCED_GLUING,
    MEASURED_GLUING,
    StiefelConnection,
    SyntheticConnection,
    analytic_wave_operator,
    pair_point,
    pair_vector,
)
from utils.crossed_module import CrossedModule, ModuleKind
from utils.errors import NotLinkable
from utils.forms import curvature
from utils.grassmann import Chart, projector_from_frame, random_projector, random_projector_near


def pair_in_chart(n, m, seed, chart, radius=0.5):
    rng = np.random.default_rng(seed)
    while True:
        p = random_projector(n, m, rng)
        q = random_projector_near(p, radius, rng)
        if all(np.linalg.svd(z.frame[list(chart.index_set), :], compute_uv=False)[-1] > 0.3 for z in (p, q)):
            return q, p


def displacement(chart, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=chart.coord_shape) + 1j * rng.normal(size=chart.coord_shape)


def test_gluing_on_an_overlap():
    connection = StiefelConnection(3, 1, eta_method="analytic")
    report = connection.gluing_residuals(Chart((0,), 3), Chart((1,), 3), samples=3, seed=0)
    assert report["samples"] == 3
    for name in ENFORCED_GLUING:
        assert report[name] <= 1e-6, name
    for name in MEASURED_GLUING:
        assert np.isfinite(report[name]), name


def test_gluing_on_one_chart_is_trivial():
    chart = Chart((0, 1), 4)
    report = StiefelConnection(4, 2).gluing_residuals(chart, chart, samples=5)
    assert all(report[name] == 0.0 for name in ENFORCED_GLUING + MEASURED_GLUING)


def test_a_defect_shows_up_in_the_potential_transformation():
    i, j = Chart((0,), 3), Chart((1,), 3)
    base = StiefelConnection(3, 1, eta_method="analytic")
    broken = SyntheticConnection.with_a_defect(base, i, lambda xi, dxi: 0.5 * dxi[:1, :])
    report = broken.gluing_residuals(i, j, samples=3, seed=1)
    assert report["eta_ij_vanishing"] > 1e-3
    assert report["a_gluing"] <= 1e-6


@pytest.mark.parametrize("method", ["fd", "analytic"])
def test_frame_gauge_relation(method):
    chart = Chart((0, 2), 4)
    connection = StiefelConnection(4, 2, eta_method=method)
    q, p = pair_in_chart(4, 2, 3, chart)
    residual = connection.gauge_relation_residual(chart, q, p, displacement(chart, 4), displacement(chart, 5))
    assert residual <= 1e-6


def test_finite_difference_eta_matches_the_analytic_derivative():
    chart = Chart((1,), 3)
    q, p = pair_in_chart(3, 1, 6, chart)
    dq, dp = displacement(chart, 7), displacement(chart, 8)
    fd = StiefelConnection(3, 1).eval_eta(chart, q, p, dq, dp)
    exact = StiefelConnection(3, 1, eta_method="analytic").eval_eta(chart, q, p, dq, dp)
    assert np.allclose(fd, exact, atol=1e-6)
    assert StiefelConnection(3, 1).eta_richardson(chart, q, p, dq, dp) < 1e-6


def test_wave_operator_formula_agrees_with_projector_construction():
    chart = Chart((0,), 3)
    q, p = pair_in_chart(3, 1, 9, chart)
    connection = StiefelConnection(3, 1)
    from utils.grassmann import coordinates, frame_from_coordinates
    xq, xp = coordinates(chart, q), coordinates(chart, p)
    exact = analytic_wave_operator(frame_from_coordinates(chart, xq), frame_from_coordinates(chart, xp))
    assert np.allclose(connection.omega(chart, xq, xp), exact, atol=1e-10)


def test_frame_gauge_of_a_constant_pair_is_the_identity():
    chart = Chart((0, 1), 4)
    _, p = pair_in_chart(4, 2, 10, chart)
    connection = StiefelConnection(4, 2)
    assert np.allclose(connection.boundary_gauge(chart, p, p), np.eye(2), atol=1e-12)


def test_curvature_decomposition():
    chart = Chart((0,), 2)
    q, p = pair_in_chart(2, 1, 11, chart)
    connection = StiefelConnection(2, 1, eta_method="analytic")
    bivector = [(displacement(chart, 12), displacement(chart, 13)),
                (displacement(chart, 14), displacement(chart, 15))]
    assert connection.eta_bar_decomposition_residual(chart, q, p, bivector) <= 1e-6


def test_eta_needs_a_linkable_pair():
    chart = Chart((0,), 2)
    p = projector_from_frame(np.array([[1.0], [0.0]]))
    q = projector_from_frame(np.array([[1.0], [1e8]]))
    with pytest.raises(NotLinkable):
        StiefelConnection(2, 1).eval_eta(chart, q, p, np.zeros((1, 1)), np.zeros((1, 1)))


def test_constructor_checks():
    with pytest.raises(ValueError):
        StiefelConnection(4, 2, CrossedModule(2, ModuleKind.CENTRAL))
    with pytest.raises(ValueError):
        StiefelConnection(3, 1, eta_method="spline")
    with pytest.raises(ValueError):
        StiefelConnection(3, 1, CrossedModule(2))
    assert StiefelConnection(3, 1, CrossedModule(1, ModuleKind.CENTRAL)).module.is_abelian


def test_potential_on_the_projective_line():
    chart = Chart((0,), 2)
    xi = 0.5 + 0.3j
    p = projector_from_frame(np.array([[1.0], [xi]]))
    value = StiefelConnection(2, 1).eval_A(chart, p, np.array([[1.0j]]))
    assert np.allclose(value, np.conj(xi) * 1.0j / (1 + abs(xi) ** 2))


def test_fake_curvature_is_the_fubini_study_form():
    chart = Chart((0,), 2)
    connection = StiefelConnection(2, 1)
    for xi in (0.0, 0.5 + 0.3j):
        p = projector_from_frame(np.array([[1.0], [xi]]))
        value = connection.fake_curvature(chart, p, (np.array([[1.0]]), np.array([[1.0j]])))
        assert np.allclose(value, 2j / (1 + abs(xi) ** 2) ** 2, atol=1e-6)
        swapped = connection.fake_curvature(chart, p, (np.array([[1.0j]]), np.array([[1.0]])))
        assert np.allclose(swapped, -value, atol=1e-12)


def test_stiefel_potential_transformation_vanishes():
    i, j = Chart((0,), 3), Chart((1,), 3)
    connection = StiefelConnection(3, 1)
    p = projector_from_frame(np.array([[1.0], [0.7 - 0.2j], [0.4j]]))
    assert np.linalg.norm(connection.potential_transformation(i, j, p, displacement(i, 16))) <= 1e-8
    assert np.array_equal(connection.potential_transformation(i, i, p, displacement(i, 16)),
                          connection.module.h_zero())


def test_curvatures_on_lines():
    chart = Chart((0,), 2)
    q, p = pair_in_chart(2, 1, 17, chart)
    connection = StiefelConnection(2, 1, eta_method="analytic")
    w = [(displacement(chart, 18 + 2 * k), displacement(chart, 19 + 2 * k)) for k in range(4)]
    b = connection.curving_Bns(chart, q, p, w[:2])
    assert np.all(np.isfinite(b))
    assert np.allclose(connection.curving_Bns(chart, q, p, [w[1], w[0]]), -b, atol=1e-10)
    # one-dimensional values commute, so the 3-curvature and the Bianchi form vanish
    assert np.linalg.norm(connection.three_curvature(chart, q, p, w[:3])) <= 1e-10
    assert connection.bianchi_residual(chart, q, p, w) <= 1e-8


def test_curvature_decomposition_on_planes():
    chart = Chart((0, 1), 4)
    q, p = pair_in_chart(4, 2, 21, chart)
    connection = StiefelConnection(4, 2, eta_method="analytic")
    bivector = [(displacement(chart, 22), displacement(chart, 23)),
                (displacement(chart, 24), displacement(chart, 25))]
    assert connection.eta_bar_decomposition_residual(chart, q, p, bivector) <= 1e-6

    (dq1, dp1), (dq2, dp2) = bivector
    pt = pair_point(chart, q, p)
    w1, w2 = pair_vector(dq1, dp1), pair_vector(dq2, dp2)
    direct = connection.curving_ns_direct_form(chart)(pt, w1, w2)
    assert np.allclose(direct, connection.curving_Bns(chart, q, p, bivector), atol=1e-6)
    # without the action of A on eta the curving is off by an O(1) amount
    cm = connection.module
    bare = curvature(connection.eta_rep_form(chart)).mapped(lambda r: cm.unrep_lie(r)[0])(pt, w1, w2)
    assert np.linalg.norm(bare - direct) > 1e-3
