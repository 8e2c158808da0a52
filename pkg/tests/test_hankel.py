import itertools

import numpy as np
import pytest
import scipy.linalg as sla

import oracles
from conftest import toy_model
from lpvred.core import AffineLpvModel, ParameterBox
from lpvred.errors import DimensionError
from lpvred.gramians import AffineGramian, affine_gramians
from lpvred.hankel import (HankelObjectiveContext, OptimizerConfig, objective, optimize_projection,
                           subsystem_hankel_baseline, subsystem_scores)

FAST = OptimizerConfig(n_starts=6, max_iters=200)


def ctx_from_blocks(P, Q, l):
    box = ParameterBox(np.zeros(l), np.ones(l))
    return HankelObjectiveContext(AffineGramian("P", np.array(P)), AffineGramian("Q", np.array(Q)), box)


@pytest.fixture(scope="module")
def toy_ctx():
    m = toy_model(n=4, l=3, m=2, q=2, seed=11, scale=0.5)
    gP, gQ = affine_gramians(m)
    return m, gP, gQ, HankelObjectiveContext.from_model(m, gP, gQ)


def test_hand_evaluated_scalar_case():
    # P(t) = diag(2,1) + t I, Q(t) = I + t diag(0,2); keeping only the constant
    # direction leaves the mismatch t L + t^2 P_1 Q_1 with t = w - 1/2, so the
    # vertex values are 2 (w = 0) and 3 (w = 1).
    P = [np.diag([2.0, 1.0]), np.eye(2)]
    Q = [np.eye(2), np.diag([0.0, 2.0])]
    ctx = ctx_from_blocks(P, Q, 1)
    T = np.array([[1.0], [0.0]])
    assert np.allclose(ctx.vertex_values(T), [2.0, 3.0], atol=1e-14)
    assert objective(ctx, T) == pytest.approx(3.0, abs=1e-14)
    assert objective(ctx, np.eye(2)) == 0.0


def test_objective_matches_brute_force(toy_ctx):
    m, gP, gQ, ctx = toy_ctx
    rng = np.random.default_rng(0)
    for r in (1, 2, 3):
        T, _ = np.linalg.qr(rng.standard_normal((4, r)))
        ref = oracles.objective_brute(gP.blocks, gQ.blocks, T, m.box.lower, m.box.upper)
        assert objective(ctx, T) == pytest.approx(ref, rel=1e-12)


def test_gradient_matches_finite_differences(toy_ctx):
    *_, ctx = toy_ctx
    rng = np.random.default_rng(1)
    T, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    tau = 1e-2 * ctx.value(T)
    f, _, G = ctx.value_and_grad(T, tau)
    E = rng.standard_normal(T.shape)
    h = 1e-6
    fp = ctx.value_and_grad(T + h * E, tau)[0]
    fm = ctx.value_and_grad(T - h * E, tau)[0]
    assert (fp - fm) / (2 * h) == pytest.approx(np.sum(G * E), rel=1e-5)


def test_parameter_free_gramians_give_constant_direction():
    n = 3
    rng = np.random.default_rng(2)
    R = rng.standard_normal((n, n))
    P0 = R @ R.T + np.eye(n)
    P = [P0, np.zeros((n, n))]
    Q = [np.eye(n), np.zeros((n, n))]
    ctx = ctx_from_blocks(P, Q, 1)
    cfg = OptimizerConfig(n_starts=4, keep_constant=False)
    proj = optimize_projection(ctx, 1, cfg)
    assert proj.objective <= 1e-10 * np.linalg.norm(P0, 2)
    assert oracles.principal_angle(proj.T_r, np.array([[1.0], [0.0]])) <= 1e-6


def _dominant_blocks(eps):
    rng = np.random.default_rng(3)
    n = 3
    M0 = rng.standard_normal((n, n))
    P0 = M0 @ M0.T + 2 * np.eye(n)
    S = rng.standard_normal((n, n))
    Md = 0.5 * (S + S.T)
    N = rng.standard_normal((n, n))
    Mn = 0.5 * (N + N.T)
    u = np.array([0.6, 0.8])
    v = np.array([-0.8, 0.6])
    P = [P0] + [u[i] * Md + eps * v[i] * Mn for i in range(2)]
    Q = [np.eye(n)] + [0.3 * u[i] * np.eye(n) for i in range(2)]
    return P, Q, u


def test_dominant_direction_found_and_beats_angular_grid():
    # no perpendicular influence: the optimal plane is exactly span{e0, (0, u)}
    P, Q, u = _dominant_blocks(0.0)
    ctx = ctx_from_blocks(P, Q, 2)
    cfg = OptimizerConfig(n_starts=8, keep_constant=False)
    proj = optimize_projection(ctx, 2, cfg)
    target = np.array([[1.0, 0.0], [0.0, u[0]], [0.0, u[1]]])
    assert oracles.principal_angle(proj.T_r, target) <= 1e-3
    # small perpendicular influence: the optimizer is at least as good as a 1-degree grid of planes
    P, Q, _ = _dominant_blocks(0.05)
    ctx = ctx_from_blocks(P, Q, 2)
    proj = optimize_projection(ctx, 2, cfg)
    grid_best = min(ctx.value(oracles.basis_from_normal(nv)) for nv in oracles.plane_grid(1.0))
    assert proj.objective <= grid_best * (1 + 1e-9)
    assert oracles.principal_angle(proj.T_r, target) <= 0.1


def test_full_order_not_worse_than_any_selection(toy_ctx):
    *_, ctx = toy_ctx
    k = ctx.n_blocks
    for cols in (2, 3):
        proj = optimize_projection(ctx, cols, FAST)
        sel = [ctx.value(np.eye(k)[:, [0, *c]]) for c in itertools.combinations(range(1, k), cols - 1)]
        assert proj.objective <= min(sel) * (1 + 1e-12)
    assert optimize_projection(ctx, k, FAST).objective == 0.0


def test_optimizer_deterministic_orthonormal_and_bounded_by_warm_start(toy_ctx):
    *_, ctx = toy_ctx
    rng = np.random.default_rng(4)
    warm, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    warm[:, 0] = [1, 0, 0, 0]
    warm, _ = np.linalg.qr(warm)
    a = optimize_projection(ctx, 2, FAST, warm_starts=[warm])
    b = optimize_projection(ctx, 2, FAST, warm_starts=[warm])
    assert np.array_equal(a.T_r, b.T_r)
    assert np.linalg.norm(a.T_r.T @ a.T_r - np.eye(2)) <= 1e-10
    assert a.objective <= ctx.value(warm) * (1 + 1e-12)
    with pytest.raises(DimensionError):
        optimize_projection(ctx, 5, FAST)
    with pytest.raises(DimensionError):
        optimize_projection(ctx, 0, FAST)


def test_nested_start_keeps_objective_nonincreasing(toy_ctx):
    *_, ctx = toy_ctx
    prev = None
    vals = []
    for cols in (1, 2, 3, 4):
        prev = optimize_projection(ctx, cols, FAST, nested=prev)
        vals.append(prev.objective)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


def test_subsystem_scores_and_removal_order():
    m = toy_model(n=3, l=3, seed=12)
    A, B, C, D = (X.copy() for X in (m.A, m.B, m.C, m.D))
    for X in (A, B, C, D):
        X[2] = 0.0
    m0 = AffineLpvModel(A, B, C, D, m.box)
    assert subsystem_scores(m0)[1] == 0.0
    # l columns keep e0 and all but the lowest scorer, i.e. the inert parameter goes first
    kept = sorted(int(np.argmax(c)) for c in subsystem_hankel_baseline(m0, 3).T_r.T)
    assert kept == [0, 1, 3]


def test_subsystem_scores_against_error_system_oracle():
    m = toy_model(n=3, l=2, seed=13)
    c = m.box.center
    ref = oracles.at(m, c)
    for i, score in enumerate(subsystem_scores(m)):
        th = c.copy()
        th[i] = 1.0
        A, B, C, _ = oracles.at(m, th)
        Ae = sla.block_diag(A, ref[0])
        Be = np.vstack([B, ref[1]])
        Ce = np.hstack([C, -ref[2]])
        assert score == pytest.approx(oracles.hankel_norm(Ae, Be, Ce), rel=1e-7)
