import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.crossed_module import (
    AlgebraElement,
    Arrow2,
    CrossedModule,
    ModuleKind,
    adjoint,
    arrow_gap,
    exchange_law_residual,
    horizontal_compose,
    horizontal_inverse,
    mat_exp,
    mat_log,
    semidirect_bracket,
    verify_crossed_module,
    vertical_compose,
    vertical_inverse,
)
from utils.errors import BranchFailure, CompositionMismatch, NotInImage

MODULES = [
    CrossedModule(2, ModuleKind.GL_ADJ),
    CrossedModule(3, ModuleKind.GL_ADJ),
    CrossedModule(1, ModuleKind.CENTRAL),
    CrossedModule(2, ModuleKind.CENTRAL),
]


@pytest.mark.parametrize("cm", MODULES, ids=lambda cm: f"{cm.kind.value}-{cm.m}")
def test_crossed_module_laws_hold_on_seeded_samples(cm):
    report = verify_crossed_module(cm, samples=1000, seed=7, threads=4)
    assert report["samples"] == 1000
    for name in ("equivariance", "peiffer", "lie_equivariance", "lie_peiffer", "exchange_law"):
        assert report[name] <= 1e-10, name


def test_zero_samples_give_an_empty_pass():
    report = verify_crossed_module(CrossedModule(2), samples=0)
    assert report["equivariance"] == 0.0
    assert report["samples"] == 0


def test_results_do_not_depend_on_thread_count():
    cm = CrossedModule(2)
    assert verify_crossed_module(cm, 40, seed=3, threads=1) == verify_crossed_module(cm, 40, seed=3, threads=4)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1), kind=st.sampled_from(list(ModuleKind)))
def test_representation_is_a_homomorphism(seed, kind):
    cm = CrossedModule(2, kind)
    rng = np.random.default_rng(seed)
    a = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    b = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    product = horizontal_compose(a, b)
    assert np.allclose(product.rep(), a.rep() @ b.rep(), atol=1e-12)
    h, g = cm.unrep(product.rep())
    assert np.allclose(h, product.h, atol=1e-12)
    assert np.allclose(g, product.g, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_inverses(seed):
    cm = CrossedModule(3)
    rng = np.random.default_rng(seed)
    a = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    unit = horizontal_compose(a, horizontal_inverse(a))
    assert arrow_gap(unit, Arrow2.identity(cm)) < 1e-12
    back = vertical_compose(vertical_inverse(a), a)
    assert arrow_gap(back, Arrow2.identity(cm, a.g)) < 1e-12


def test_exchange_law_on_a_grid():
    cm = CrossedModule(2)
    rng = np.random.default_rng(11)
    a12 = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    a22 = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    a11 = Arrow2(cm.random_h(rng), a12.target(), cm)
    a21 = Arrow2(cm.random_h(rng), a22.target(), cm)
    assert exchange_law_residual(a11, a12, a21, a22) < 1e-12


def test_vertical_compose_rejects_mismatched_endpoints():
    cm = CrossedModule(2)
    rng = np.random.default_rng(0)
    lower = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    upper = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    with pytest.raises(CompositionMismatch) as info:
        vertical_compose(upper, lower)
    assert info.value.residual > 1e-8


def test_vertical_compose_accepts_endpoints_within_tolerance():
    cm = CrossedModule(2)
    rng = np.random.default_rng(1)
    lower = Arrow2(cm.random_h(rng), cm.random_g(rng), cm)
    upper = Arrow2(cm.random_h(rng), lower.target() * (1 + 1e-11), cm)
    composite = vertical_compose(upper, lower)
    assert np.allclose(composite.g, lower.g)
    assert np.allclose(composite.h, upper.h @ lower.h)


def test_central_preimage_requires_scalar_matrix():
    cm = CrossedModule(2, ModuleKind.CENTRAL)
    assert np.allclose(cm.t_preimage(3.0 * np.eye(2)), [[3.0]])
    with pytest.raises(NotInImage):
        cm.t_preimage(np.diag([1.0, 2.0]))
    with pytest.raises(NotInImage):
        cm.t_lie_preimage(np.diag([0.0, 1.0]))


def test_infinitesimal_peiffer_and_adjoint():
    cm = CrossedModule(2)
    rng = np.random.default_rng(5)
    y, y2 = cm.random_y(rng), cm.random_y(rng)
    assert np.allclose(cm.alpha_lie(cm.t_lie(y), y2), cm.h_bracket(y, y2))

    x1 = AlgebraElement(cm.random_y(rng, 0.3), cm.random_x(rng, 0.3), cm)
    x2 = AlgebraElement(cm.random_y(rng, 0.3), cm.random_x(rng, 0.3), cm)
    # d/ds Ad_{exp(s x1)} x2 at s = 0 is the bracket
    s = 1e-6
    h, g = cm.unrep(mat_exp(s * x1.rep()))
    moved = adjoint(h, g, x2)
    derivative = AlgebraElement((moved.y - x2.y) / s, (moved.x - x2.x) / s, cm)
    bracket = semidirect_bracket(x1, x2)
    assert np.allclose(derivative.y, bracket.y, atol=1e-5)
    assert np.allclose(derivative.x, bracket.x, atol=1e-5)


def test_rep_lie_matches_group_derivative():
    cm = CrossedModule(2)
    rng = np.random.default_rng(9)
    y, x = cm.random_y(rng), cm.random_x(rng)
    s = 1e-7
    group = cm.rep(mat_exp(s * y), mat_exp(s * x))
    assert np.allclose((group - np.eye(4)) / s, cm.rep_lie(y, x), atol=1e-5)


def test_matrix_log_branch_cut():
    with pytest.raises(BranchFailure):
        mat_log(-np.eye(2))
    x = np.array([[0.1, 0.2], [-0.3, 0.05]], dtype=complex)
    assert np.allclose(mat_log(mat_exp(x)), x, atol=1e-12)


def test_invalid_dimension():
    with pytest.raises(ValueError):
        CrossedModule(0)
