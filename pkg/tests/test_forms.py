import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.forms import (
    Form,
    constant_form,
    coordinate_basis,
    curvature,
    exterior_derivative,
    graded_commutator,
    wedge,
)

M = np.array([[0.0, 1.0], [2.0, 0.5]])
N = np.array([[1.0, -1.0], [0.0, 3.0]])


def constant_one_form(*components):
    return constant_form(1, lambda v: sum(c * v[k] for k, c in enumerate(components)))


def test_wedge_of_one_forms_is_alternating():
    a = constant_one_form(M, N)
    b = constant_one_form(N, M)
    e0, e1 = coordinate_basis(2)
    value = wedge(a, b)(np.zeros(2), e0, e1)
    assert np.allclose(value, M @ M - N @ N)
    assert np.allclose(wedge(a, b)(np.zeros(2), e1, e0), -value)
    assert np.allclose(wedge(a, b)(np.zeros(2), e0, e0), 0.0)


def test_graded_commutator_of_one_forms():
    a = constant_one_form(M, N)
    e0, e1 = coordinate_basis(2)
    # [a, a] = 2 a^a for odd forms
    assert np.allclose(graded_commutator(a, a)(np.zeros(2), e0, e1), 2 * (M @ N - N @ M))


def test_exterior_derivative_of_a_linear_form():
    omega = Form(1, lambda x, v: x[0] * v[1] * np.eye(2))
    e0, e1 = coordinate_basis(2)
    d_omega = exterior_derivative(omega)
    assert np.allclose(d_omega(np.array([0.3, -0.7]), e0, e1), np.eye(2), atol=1e-8)


def test_d_squared_vanishes():
    f = Form(0, lambda x: np.array([[np.sin(x[0]) * np.exp(x[1])]]))
    e0, e1 = coordinate_basis(2)
    dd = exterior_derivative(exterior_derivative(f, 1e-4), 1e-4)
    assert np.allclose(dd(np.array([0.2, 0.1]), e0, e1), 0.0, atol=1e-5)


def test_curvature_of_a_constant_potential_is_the_commutator():
    a = constant_one_form(M, N)
    e0, e1 = coordinate_basis(2)
    assert np.allclose(curvature(a)(np.zeros(2), e0, e1), M @ N - N @ M, atol=1e-9)
    with pytest.raises(ValueError):
        curvature(wedge(a, a))


def test_degree_checks():
    a = constant_one_form(M, N)
    with pytest.raises(ValueError):
        a(np.zeros(2))
    with pytest.raises(ValueError):
        a + wedge(a, a)


def test_pullback_along_a_linear_map():
    a = constant_one_form(M, N)
    jacobian = np.array([[1.0, 2.0], [0.0, 1.0]])
    pulled = a.pullback(lambda s: jacobian @ s, lambda s, w: jacobian @ w, 2)
    e0, e1 = coordinate_basis(2)
    assert np.allclose(pulled(np.zeros(2), e1), 2 * M + N)
    assert np.allclose((pulled - a)(np.zeros(2), e0), 0.0)
    assert np.allclose((-a).scaled(2.0)(np.zeros(2), e0), -2 * M)
