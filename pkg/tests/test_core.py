import numpy as np
import pytest

from conftest import toy_model
from lpvred.core import (AffineLpvModel, ParameterBox, ParameterProjection, apply_projection, apply_transformation,
                         difference_system, error_system, lti_difference, sample, vertices)
from lpvred.errors import DimensionError, DomainError, StabilityError, ValidationError


def test_box_vertices_and_samples():
    box = ParameterBox([0, -1, 2], [1, 1, 3])
    V = np.array(vertices(box))
    assert V.shape == (8, 3)
    assert len({tuple(v) for v in V}) == 8
    S = np.array(sample(box, 50, seed=4))
    assert S.shape == (50, 3)
    assert np.all(S >= box.lower) and np.all(S <= box.upper)
    # Latin hypercube: one sample per stratum on every axis
    for i in range(3):
        strata = np.floor((S[:, i] - box.lower[i]) / box.width[i] * 50).astype(int)
        assert sorted(strata) == list(range(50))
    assert np.array_equal(S, np.array(sample(box, 50, seed=4)))


def test_box_rejects_bad_input():
    with pytest.raises(ValidationError):
        ParameterBox([1.0], [0.0])
    with pytest.raises(DimensionError):
        ParameterBox([0.0, 0.0], [1.0])
    with pytest.raises(DomainError):
        ParameterBox([0.0], [1.0]).check([1.5])


def test_evaluation_matches_stacked_blocks():
    m = toy_model(n=3, l=2, m=2, q=2, seed=1)
    th = np.array([0.3, 0.8])
    sys = m.at(th)
    A = m.A[0] + 0.3 * m.A[1] + 0.8 * m.A[2]
    assert np.allclose(sys.A, A, atol=1e-14)
    A_st, B_st, C_st, D_st = m.stacked()
    assert A_st.shape == (9, 3)
    m2 = AffineLpvModel.from_stacked(A_st, B_st, C_st, D_st, m.box)
    assert np.array_equal(m2.A, m.A)
    with pytest.raises(DomainError):
        m.at([0.3, 1.2])


def test_normalization_keeps_matrices():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 2, 2)) - 3 * np.eye(2)
    B, C, D = rng.standard_normal((3, 2, 1)), rng.standard_normal((3, 1, 2)), rng.standard_normal((3, 1, 1))
    raw = AffineLpvModel(A, B, C, D, ParameterBox([1.0, -2.0], [3.0, 2.0]))
    unit = raw.normalized()
    assert np.allclose(unit.box.lower, 0) and np.allclose(unit.box.upper, 1)
    th = np.array([2.5, -1.0])
    th_unit = (th - raw.box.lower) / raw.box.width
    assert np.allclose(raw.combine([1, *th]).A, unit.at(th_unit).A, atol=1e-13)
    d = unit.to_dict()
    back = AffineLpvModel.from_dict(d)
    assert np.array_equal(back.A, unit.A)


def test_transformation_round_trip():
    m = toy_model(n=3, l=2, seed=2)
    T, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((3, 3)))
    mt = apply_transformation(m, T)
    a = np.array([1.0, 0.2, 0.9])
    assert np.allclose(mt.combine(a @ T).A, m.combine(a).A, atol=1e-13)
    with pytest.raises(ValidationError):
        apply_transformation(m, T + 0.1)


def test_projection_validation_and_identity():
    with pytest.raises(ValidationError):
        ParameterProjection(np.array([[1.0, 0.5], [0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionError):
        ParameterProjection(np.eye(3)[:, :0])
    m = toy_model(n=3, l=2, seed=3)
    full = ParameterProjection(np.eye(3))
    red = apply_projection(m, full, m.box.center)
    assert np.allclose(red.A, m.A, atol=1e-14)


def test_centered_projection_freezes_at_center():
    m = toy_model(n=3, l=2, seed=4)
    proj = ParameterProjection.from_columns([0, 1], 2)
    red = apply_projection(m, proj, m.box.center)
    for t2 in (0.0, 0.3, 1.0):
        expected = m.combine([1.0, 0.7, 0.5]).A
        assert np.allclose(red.at([0.7, t2]).A, expected, atol=1e-13)


def test_difference_system_exact_zero_and_consistency():
    m = toy_model(n=3, l=1, seed=5)
    d = difference_system(m, m)
    sys = d.at([0.4])
    # output matrix acting on the error coordinates and the input map vanish exactly
    assert np.all(sys.B[:3] == 0) and np.all(sys.D == 0)
    other = toy_model(n=3, l=1, seed=6)
    e = error_system(m, ParameterProjection.from_columns([0], 1))
    assert e.n_states == 6
    s1, s2 = m.at([0.4]), other.at([0.4])
    dl = lti_difference(s1, s2)
    w = 0.7j
    tf = lambda s: s.C @ np.linalg.solve(w * np.eye(s.n_states) - s.A, s.B) + s.D  # noqa: E731
    assert np.allclose(tf(dl), tf(s1) - tf(s2), atol=1e-12)


def test_stability_check():
    A = np.array([[[1.0]], [[-3.0]]])
    m = AffineLpvModel(A, np.ones((2, 1, 1)), np.ones((2, 1, 1)), np.zeros((2, 1, 1)),
                       ParameterBox([0.0], [1.0]))
    assert not m.is_stable()
    with pytest.raises(StabilityError):
        m.require_stable()
