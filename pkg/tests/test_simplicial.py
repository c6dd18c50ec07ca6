import logging
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.connection import StiefelConnection
from utils.forms import Form, constant_form, exterior_derivative
from utils.grassmann import Chart
from utils.simplicial import (
    Cochain,
    Triangulation,
    bch2,
    cobord,
    cup,
    curving_product_check,
    de_rham,
    discrete_cartan_residual,
    seeded_one_form,
    zero_one_form,
)

M = np.array([[0.0, 1.0], [2.0, 0.5]])
N = np.array([[1.0, -1.0], [0.0, 3.0]])


def test_triangulation_of_the_unit_square():
    tri = Triangulation.rectangle(0.25)
    assert tri.shape == (4, 4)
    assert len(tri.triangles) == 32
    assert len(tri.vertices) == 25
    assert tri.epsilon == pytest.approx(np.sqrt(2) * 0.25)
    assert len(tri.edges) == 4 * 5 * 2 + 16
    marked = tri.triangles_at([(0.3, 0.6)])[0]
    assert np.allclose(tri.points(marked), [[0.25, 0.5], [0.5, 0.5], [0.25, 0.75]])


def test_cochains_are_antisymmetric():
    tri = Triangulation.rectangle(0.5)
    f = Cochain.from_function(0, lambda a: np.array(float(a)), tri)
    df = cobord(f)
    assert df(0, 1) == pytest.approx(1.0)
    assert df(1, 0) == pytest.approx(-1.0)
    assert df(2, 2) == 0.0
    with pytest.raises(ValueError):
        df(0, 1, 2)


def test_cobord_squares_to_zero():
    tri = Triangulation.rectangle(0.25)
    rng = np.random.default_rng(0)
    values = {s: rng.normal(size=(2, 2)) for s in tri.simplices(1)}
    omega = Cochain(1, values, tri)
    assert all(np.allclose(v, 0.0) for v in cobord(cobord(Cochain.from_function(
        0, lambda a: rng.normal(size=(2, 2)), tri))).values.values())
    assert len(cobord(omega).values) == len(tri.triangles)
    with pytest.raises(ValueError):
        cobord(Cochain(1, values))


def test_de_rham_of_an_exact_form():
    f = Form(0, lambda x: np.array([[x[0] ** 2 + 3 * x[0] * x[1]]]))
    df = exterior_derivative(f)
    a, b = np.array([0.1, 0.2]), np.array([0.4, -0.3])
    assert np.allclose(de_rham(df, (a, b)), f(b) - f(a), atol=1e-8)
    assert np.allclose(de_rham(f, (a,)), f(a))
    with pytest.raises(ValueError):
        de_rham(df, (a, b, a))


def test_stokes_on_a_triangle():
    omega = Form(1, lambda x, v: (x[0] * v[1] - 2 * x[1] * v[0]) * M)
    tri = (np.array([0.0, 0.0]), np.array([0.3, 0.1]), np.array([0.1, 0.4]))
    boundary = de_rham(omega, tri[:2]) + de_rham(omega, tri[1:]) - de_rham(omega, (tri[0], tri[2]))
    assert np.allclose(de_rham(exterior_derivative(omega), tri), boundary, atol=1e-8)


def test_quadrature_rules_agree_on_small_triangles():
    omega = Form(2, lambda x, v1, v2: np.sin(3 * x[0]) * np.cos(2 * x[1]) * (v1[0] * v2[1] - v1[1] * v2[0]))
    tri = (np.array([0.2, 0.3]), np.array([0.21, 0.3]), np.array([0.2, 0.31]))
    assert abs(de_rham(omega, tri) - de_rham(omega, tri, rule="dunavant7")) <= 1e-6


def test_cup_of_constant_forms_matches_the_bracket_wedge():
    tri = Triangulation.rectangle(1.0)
    a = Cochain.from_form(constant_form(1, lambda v: v[0] * M), tri)
    b = Cochain.from_form(constant_form(1, lambda v: v[1] * N), tri)
    first = tri.simplices(2)[0]
    assert np.allclose(cup(a, b)(*first), 0.5 * (M @ N - N @ M))
    assert np.allclose(cup(a, b, normalization="printed")(*first), 0.75 * (M @ N - N @ M))
    with pytest.raises(ValueError):
        cup(a, b, normalization="other")


def test_cup_of_zero_cochains_is_the_pointwise_bracket():
    tri = Triangulation.rectangle(1.0)
    f = Cochain.from_function(0, lambda v: M * (v + 1), tri)
    g = Cochain.from_function(0, lambda v: N, tri)
    assert np.allclose(cup(f, g)(2), 3 * (M @ N - N @ M))
    with pytest.raises(ValueError):
        cup(cobord(f), cobord(cobord(g)))


def test_bch2(caplog):
    a = 0.01 * M
    b = 0.01 * N
    assert np.allclose(bch2(a, b), a + b + 0.5 * (a @ b - b @ a))
    with caplog.at_level(logging.WARNING):
        bch2(M, N)
    assert "exceed" in caplog.text


def test_discrete_cartan_order_for_a_non_commuting_field():
    report = discrete_cartan_residual(seeded_one_form(2, seed=0), threads=2)
    assert len(report["residuals"]) == 4
    assert report["residuals"][-1] < report["residuals"][0]
    assert abs(report["order"] - 3.0) <= 0.3
    assert [row["level"] for row in report["rows"]] == [0, 1, 2, 3]


def test_discrete_cartan_of_the_zero_field():
    report = discrete_cartan_residual(zero_one_form(2), cells=(0.2, 0.1, 0.05))
    assert max(report["residuals"]) <= 1e-12


def test_refinement_needs_three_levels():
    with pytest.raises(ValueError):
        discrete_cartan_residual(seeded_one_form(2), cells=(0.1, 0.05))


def test_curving_product_is_exact_for_lines():
    # gl(1) commutes, so the product telescopes to the integral of d eta
    chart = Chart((0,), 2)
    connection = StiefelConnection(2, 1, eta_method="analytic")
    report = curving_product_check(
        connection, chart,
        lambda s: np.array([0.3 + 0.2 * s, 0.1 * s ** 2]),
        lambda u: np.array([0.1 * u, -0.2 + 0.3 * u]),
        cells=(0.1, 0.05, 0.025),
    )
    assert max(report["residuals"]) <= 1e-10


def test_curving_product_converges_at_third_order_on_planes():
    rng = np.random.default_rng(3)
    y0, y1, y2 = 0.15 * rng.standard_normal((3, 8))
    x0, x1 = 0.15 * rng.standard_normal((2, 8))
    connection = StiefelConnection(4, 2, eta_method="analytic")
    report = curving_product_check(
        connection, Chart((0, 1), 4),
        lambda s: y0 + s * y1 + s ** 2 * y2,
        lambda u: x0 + u * x1,
        cells=(0.1, 0.05, 0.025, 0.0125),
    )
    assert len(report["residuals"]) == 4
    assert report["residuals"][0] > 1e-12
    assert report["order"] >= 2.5
