import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.errors import CompositionMismatch, IllConditioned, NotElementary, NotLinkable
from utils.grassmann import projector_from_frame, random_projector, random_projector_near
from utils.two_space import (
    PseudoSurface,
    Skeleton,
    compose,
    elementary_wave_operator,
    interpolate_projectors,
    ps_boundaries,
    ps_classify,
    ps_horizontal_compose,
    ps_vertical_compose,
    reduce,
    round_trip_defect,
    seeded_pseudosurface,
    skeletons_equal,
    wave_operator,
    weak_inverse,
)


def test_hand_computed_wave_operator():
    p0 = projector_from_frame(np.array([[1.0], [0.0]]))
    p = projector_from_frame(np.array([[1.0], [1.0]]))
    omega = wave_operator((p, p0))
    assert np.array_equal(np.round(omega.value.real, 14), np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert np.allclose(omega.value.imag, 0.0)


def test_wave_operator_algebra_on_seeded_pairs():
    worst_idempotency = worst_inverse = 0.0
    for seed in range(500):
        p0 = random_projector(4, 2, seed)
        p = random_projector_near(p0, 1.0, seed + 10_000)
        arrow = wave_operator((p, p0))
        omega = arrow.value
        worst_idempotency = max(worst_idempotency, np.linalg.norm(omega @ omega - omega))
        worst_inverse = max(worst_inverse, np.linalg.norm(weak_inverse(arrow) @ omega - p0.matrix))
    assert worst_idempotency <= 1e-9
    assert worst_inverse <= 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_composition_is_functorial(seed):
    p = random_projector(5, 2, seed)
    q = random_projector_near(p, 0.8, seed + 1)
    r = random_projector_near(q, 0.8, seed + 2)
    composite = compose(wave_operator((r, q)), wave_operator((q, p)))
    direct = wave_operator((r, q, p))
    assert np.linalg.norm(composite.value - direct.value) <= 1e-10
    assert len(composite.skeleton) == 3


def test_identity_arrows_and_reduction():
    p = random_projector(3, 1, 2)
    identity = wave_operator((p, p))
    assert identity.is_identity
    assert np.allclose(identity.value, p.matrix)
    assert len(reduce(Skeleton((p, p, p)))) == 1
    assert round_trip_defect(p, p) < 1e-12


def test_non_identity_arrows_have_no_inverse():
    p = random_projector(3, 1, 3)
    q = random_projector_near(p, 0.7, 4)
    assert round_trip_defect(p, q) > 1e-4


def test_compose_rejects_mismatched_endpoints():
    p = random_projector(3, 1, 5)
    q = random_projector_near(p, 0.5, 6)
    r = random_projector_near(p, 0.5, 7)
    with pytest.raises(CompositionMismatch):
        compose(wave_operator((r, p)), wave_operator((q, p)))


def test_unlinkable_and_ill_conditioned_pairs():
    e0 = projector_from_frame(np.array([[1.0], [0.0]]))
    e1 = projector_from_frame(np.array([[0.0], [1.0]]))
    with pytest.raises(NotLinkable) as info:
        elementary_wave_operator(e1, e0)
    assert info.value.distance == pytest.approx(np.pi / 2)

    p0 = random_projector(4, 2, 8)
    p = random_projector_near(p0, 1.0, 9)
    with pytest.raises(IllConditioned):
        elementary_wave_operator(p, p0, condition_bound=1.0)


def test_weak_inverse_needs_elementary_arrow():
    p = random_projector(3, 1, 10)
    q = random_projector_near(p, 0.5, 11)
    r = random_projector_near(q, 0.5, 12)
    with pytest.raises(NotElementary):
        weak_inverse(wave_operator((r, q, p)))


def test_interpolation_hits_the_endpoints():
    a = random_projector(4, 2, 13)
    b = random_projector_near(a, 0.6, 14)
    assert np.allclose(interpolate_projectors(a, b, 0.0).matrix, a.matrix)
    assert np.allclose(interpolate_projectors(a, b, 1.0).matrix, b.matrix)


def test_seeded_pseudosurfaces_are_classified():
    impervious = seeded_pseudosurface(3, 1, seed=0, kind="impervious", grid=64)
    classes = ps_classify(impervious)
    assert classes["impervious"] and classes["elementary"]
    assert not classes["cyclic"]
    assert len(impervious.samples[len(impervious.samples) // 2]) == 2

    elementary = seeded_pseudosurface(3, 1, seed=0, kind="elementary", grid=64)
    assert not ps_classify(elementary)["impervious"]

    constant = seeded_pseudosurface(3, 1, seed=0, kind="constant", grid=16)
    classes = ps_classify(constant)
    assert classes["cyclic"] and classes["pinched"]
    with pytest.raises(ValueError):
        seeded_pseudosurface(3, 1, kind="folded")


def test_pseudosurface_file_format():
    surface = seeded_pseudosurface(3, 1, seed=4, kind="elementary", grid=16)
    data = surface.to_dict()
    assert (data["N"], data["n"], data["m"]) == (16, 3, 1)
    assert len(data["samples"]) == 17
    loaded = PseudoSurface.from_dict(data)
    assert all(skeletons_equal(a, b) for a, b in zip(surface.samples, loaded.samples))
    data["N"] = 15
    with pytest.raises(ValueError):
        PseudoSurface.from_dict(data)


def test_pseudosurface_composition():
    base = seeded_pseudosurface(3, 1, seed=2, kind="elementary", grid=32)
    first = base.restricted(0, 16)
    second = base.restricted(16, 32)
    joined = ps_horizontal_compose(first, second)
    assert joined.N == 32
    assert skeletons_equal(joined.samples[-1], base.samples[-1])
    with pytest.raises(CompositionMismatch):
        ps_horizontal_compose(second, first)

    lower = seeded_pseudosurface(3, 1, seed=3, kind="elementary", grid=16)
    shift = random_projector(3, 1, 99)
    upper = PseudoSurface(tuple(Skeleton((interpolate_projectors(s.target, shift, 0.1), s.target))
                                for s in lower.samples))
    stacked = ps_vertical_compose(upper, lower)
    assert max(len(s) for s in stacked.samples) == 3
    with pytest.raises(CompositionMismatch):
        ps_vertical_compose(lower, upper)


def test_skeleton_at_grid_points():
    surface = seeded_pseudosurface(4, 2, seed=5, kind="elementary", grid=8)
    assert skeletons_equal(surface.skeleton_at(0.5), surface.samples[4])
    assert surface.resampled(8) is surface
    assert surface.resampled(16).N == 16


def test_validate_reports_the_parameter():
    e0 = projector_from_frame(np.array([[1.0], [0.0]]))
    e1 = projector_from_frame(np.array([[0.0], [1.0]]))
    surface = PseudoSurface((Skeleton((e0,)), Skeleton((e1, e0))))
    with pytest.raises(NotLinkable) as info:
        surface.validate()
    assert info.value.t == pytest.approx(1.0)


def test_boundaries_of_an_impervious_surface():
    surface = seeded_pseudosurface(3, 1, seed=6, kind="impervious", grid=16)
    source, target = ps_boundaries(surface)
    assert len(source) == len(target) == 17
    # identity skeletons at both ends: the boundary paths share their endpoints
    assert np.allclose(source[0].matrix, target[0].matrix)
    assert np.allclose(source[-1].matrix, target[-1].matrix)
    assert not np.allclose(source[8].matrix, target[8].matrix)
