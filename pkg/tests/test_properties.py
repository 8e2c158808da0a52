"""Randomized identities and invariants (hypothesis)."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import toy_model
from lpvred.core import (AffineLpvModel, ParameterProjection, apply_projection, apply_transformation,
                         difference_system, sample)
from lpvred.gramians import AffineGramian
from lpvred.hankel import HankelObjectiveContext
from lpvred.norms import EvaluationSet, hankel_norm, hinf_norm, p_norm
from lpvred.sensitivity import CovarianceMatrix, covariance_to_projection

seeds = st.integers(0, 2 ** 31 - 1)
dims = st.tuples(st.integers(1, 5), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))


def orthonormal(rng, k, c):
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return (Q * np.sign(np.diag(R)))[:, :c]


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def random_psd_blocks(rng, k, n):
    out = []
    for _ in range(k):
        M = rng.standard_normal((n, n))
        out.append(M @ M.T)
    return np.array(out)


@settings(max_examples=150)
@given(seeds, dims)
def test_transformation_equivalence(seed, d):
    n, l, m, q = d
    rng = np.random.default_rng(seed)
    model = toy_model(n, l, m, q, seed % 1000)
    T = orthonormal(rng, l + 1, l + 1)
    mt = apply_transformation(model, T)
    th = rng.uniform(0, 1, l)
    a = np.concatenate(([1.0], th))
    ref, got = model.combine(a), mt.combine(a @ T)
    for X, Y in ((got.A, ref.A), (got.B, ref.B), (got.C, ref.C), (got.D, ref.D)):
        assert rel(X, Y) <= 1e-10


@settings(max_examples=150)
@given(seeds, dims, st.booleans())
def test_projection_idempotent(seed, d, centered):
    n, l, m, q = d
    rng = np.random.default_rng(seed)
    model = toy_model(n, l, m, q, seed % 1000)
    c = int(rng.integers(1, l + 2))
    proj = ParameterProjection(orthonormal(rng, l + 1, c))
    center = model.box.center if centered else None
    once = apply_projection(model, proj, center)
    twice = apply_projection(once, proj, center)
    for X, Y in ((twice.A, once.A), (twice.B, once.B), (twice.C, once.C), (twice.D, once.D)):
        assert np.abs(X - Y).max() <= 1e-10 * max(np.abs(Y).max(), 1.0)


@settings(max_examples=150)
@given(seeds, st.integers(1, 5), st.integers(1, 6))
def test_objective_rotation_invariant(seed, l, n):
    rng = np.random.default_rng(seed)
    k = l + 1
    box = toy_model(1, l).box
    ctx = HankelObjectiveContext(AffineGramian("P", random_psd_blocks(rng, k, n)),
                                 AffineGramian("Q", random_psd_blocks(rng, k, n)), box)
    c = int(rng.integers(1, k + 1))
    T = orthonormal(rng, k, c)
    R = orthonormal(rng, c, c)
    a, b = ctx.value(T), ctx.value(T @ R)
    assert abs(a - b) <= 1e-10 * max(ctx.scale, 1.0)


@settings(max_examples=100)
@given(seeds, dims)
def test_stacked_round_trip(seed, d):
    model = toy_model(*d, seed=seed % 1000)
    back = AffineLpvModel.from_stacked(*model.stacked(), model.box)
    for X, Y in ((back.A, model.A), (back.B, model.B), (back.C, model.C), (back.D, model.D)):
        assert np.array_equal(X, Y)


@settings(max_examples=100)
@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_affine_gramian_midpoint(seed, l, n):
    rng = np.random.default_rng(seed)
    g = AffineGramian("P", random_psd_blocks(rng, l + 1, n))
    wa, wb = rng.uniform(0, 1, l), rng.uniform(0, 1, l)
    mid = g(0.5 * (wa + wb))
    assert np.abs(mid - 0.5 * (g(wa) + g(wb))).max() <= 1e-12 * max(np.abs(mid).max(), 1.0)


@settings(max_examples=100)
@given(seeds, st.integers(1, 6))
def test_psd_eigenvalue_lemmas(seed, n):
    rng = np.random.default_rng(seed)
    A, B = random_psd_blocks(rng, 2, n)
    tol = 1e-10 * (np.linalg.norm(A, 2) + np.linalg.norm(B, 2)) ** 2
    assert np.linalg.eigvalsh(A + B).min() >= -tol
    ev = np.linalg.eigvals(A @ B)
    assert np.abs(ev.imag).max() <= 1e-8 * max(np.abs(ev).max(), 1.0)
    assert ev.real.min() >= -tol


@settings(max_examples=25)
@given(seeds, st.integers(1, 3), st.integers(1, 4))
def test_full_rank_projection_error_vanishes(seed, l, n):
    model = toy_model(n, l, seed=seed % 1000)
    rng = np.random.default_rng(seed)
    proj = ParameterProjection(orthonormal(rng, l + 1, l + 1))
    err = difference_system(model, apply_projection(model, proj, model.box.center))
    for th in sample(model.box, 3, seed % 97):
        assert hinf_norm(err.at(th)) <= 1e-8


@settings(max_examples=25)
@given(seeds, st.integers(1, 4))
def test_hankel_below_hinf_and_eval_set_monotone(seed, n):
    model = toy_model(n, 2, m=2, q=2, seed=seed % 1000)
    for th in sample(model.box, 3, seed % 89):
        sys = model.at(th)
        assert hankel_norm(sys) <= (hinf_norm(sys, rel_tol=1e-9) + np.linalg.norm(sys.D, 2)) * (1 + 1e-8)
    small = p_norm(model, "hankel", EvaluationSet("vertices")).value
    big = p_norm(model, "hankel", EvaluationSet("vertices+samples", 10, seed % 13)).value
    assert big >= small


@settings(max_examples=100)
@given(seeds, st.integers(2, 6))
def test_covariance_zero_rows_ranked_last(seed, l):
    rng = np.random.default_rng(seed)
    R = np.abs(rng.standard_normal((l, l))) + 0.1
    E = R + R.T
    z = int(rng.integers(0, l))
    E[z] = 0.0
    E[:, z] = 0.0
    T = covariance_to_projection(CovarianceMatrix("TSCM", E), l).T_r
    # the retained directions span everything except the inert axis
    assert np.abs(T[z + 1]).max() <= 1e-10
    assert np.linalg.norm(T.T @ T - np.eye(l)) <= 1e-10
