"""Acceptance criteria 1-7. Each test prints one ``criterion N: PASS|FAIL`` line.

The n=45 cases are expensive (Gramian synthesis alone takes several
minutes on one core); the Gramians are computed once per module and shared
between criteria 5 and 7.
"""
import time

import numpy as np
import pytest

import oracles
import test_properties as props
from conftest import toy_model
from lpvred.core import sample, vertices
from lpvred.gramians import affine_gramians, build_rate_bounded_lmis, build_static_lmis
from lpvred.generators import generate_random_model, generate_thermal_model
from lpvred.norms import p_norm
from lpvred.sensitivity import build_sensitivity_realization, time_sensitivity_matrices
from lpvred.sweep import METHODS, SweepConfig, run_reduction_sweep
from test_gramians import with_rates


@pytest.fixture
def verdict(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


def test_criterion_1_bound_suite(verdict):
    t0 = time.perf_counter()
    worst_margin, worst_ratio = np.inf, 0.0
    for seed in range(10):
        m = generate_random_model(seed, n=10, l=3)
        gP, gQ = affine_gramians(m)
        for th in vertices(m.box) + sample(m.box, 200, seed):
            A, B, C, _ = oracles.at(m, th)
            P, Q = oracles.gramians(A, B, C)
            fP, fQ = gP(th), gQ(th)
            for F, G in ((fP, P), (fQ, Q)):
                worst_margin = min(worst_margin, np.linalg.eigvalsh(F - G)[0] / np.linalg.eigvalsh(F)[-1])
            exact = np.linalg.eigvals(P @ Q).real.max()
            bound = np.linalg.eigvals(fP @ fQ).real.max()
            worst_ratio = max(worst_ratio, exact / bound)
    dt = time.perf_counter() - t0
    ok = worst_margin >= -1e-8 and worst_ratio <= 1 + 1e-8 and dt < 300
    verdict(1, ok, f"worst relative margin {worst_margin:.2e}, worst Hankel ratio {worst_ratio:.6f}, {dt:.0f} s")


def test_criterion_2_lmi_counts(verdict):
    rows = []
    for l in range(1, 6):
        m = with_rates(toy_model(n=2, l=l, seed=l))
        s = build_static_lmis(m, "P").n_vertex_constraints
        r = build_rate_bounded_lmis(m, "P").n_vertex_constraints
        rows.append(s == 2 ** (l + 1) and r == 2 ** (l + 1) + l)
    verdict(2, all(rows), f"exact counts for l=1..5: {rows}")


def test_criterion_3_sensitivities(verdict):
    rng = np.random.default_rng(2024)
    worst_f = worst_t = 0.0
    for seed in range(10):
        m = generate_random_model(seed, n=10, l=3)
        for _ in range(20):
            th = rng.uniform(0.02, 0.98, 3)
            w = float(10 ** rng.uniform(-2, 2))
            i = int(rng.integers(1, 4))
            Hi = build_sensitivity_realization(m, i).transfer(th, w)
            fd = oracles.fd_transfer_derivative(m, th, w, i, h=1e-5)
            worst_f = max(worst_f, np.linalg.norm(fd - Hi, 2) / max(1.0, np.linalg.norm(Hi, 2)))
        th = rng.uniform(0.02, 0.98, 3)
        U = rng.standard_normal((41, 2))
        Ms = time_sensitivity_matrices(m, th, 40, 0.05)
        for i in (1, 2, 3):
            fd = oracles.fd_time_sensitivity(m, th, 0.05, U, i)
            worst_t = max(worst_t, np.linalg.norm(Ms[i - 1] @ U.reshape(-1) - fd) / np.linalg.norm(fd))
    verdict(3, worst_f <= 1e-6 and worst_t <= 1e-6,
            f"worst transfer FD error {worst_f:.2e}, worst time-domain FD error {worst_t:.2e}")


def test_criterion_4_oracle_equivalence(verdict):
    m = toy_model(n=2, l=1, seed=0)
    errs = {}
    for which in ("hankel", "hinf"):
        val = p_norm(m, which, rel_tol=1e-8).value
        ref = oracles.brute_pnorm(m, which, count=1001)
        errs[which] = abs(val - ref) / ref
    verdict(4, max(errs.values()) <= 1e-3,
            f"relative deviation p_inf,H {errs['hankel']:.2e}, p_inf,inf {errs['hinf']:.2e}")


@pytest.fixture(scope="module")
def random45():
    model = generate_random_model(0)
    t0 = time.perf_counter()
    grams = affine_gramians(model)
    return model, grams, time.perf_counter() - t0


def _sweep(model, grams=None):
    return run_reduction_sweep(model, SweepConfig(n_r=tuple(range(6)), simulate=False), gramians=grams)


def test_criterion_5_reduction_sanity(verdict, random45):
    model, grams, _ = random45
    rep = _sweep(model, grams)
    full = {m: rep.errors(m)[5] for m in METHODS}
    lossless = all(v is not None and v <= 1e-8 for v in full.values())
    mono = {m: rep.nonincreasing(m) for m in ("hankel", "tscm")}
    thermal = _sweep(generate_thermal_model(0))
    errs = [c.relative_error for c in thermal.cells if c.status == "ok"]
    e0 = [c.relative_error for c in thermal.cells if c.n_r == 0 and c.status == "ok"]
    worst0 = bool(e0) and len(errs) == len(thermal.cells) and min(e0) >= max(errs) * (1 - 1e-12)
    fmt = ", ".join(f"{k}: {v:.1e}" if v is not None else f"{k}: failed" for k, v in full.items())
    detail = (f"n_r=5 errors {{{fmt}}}; "
              f"non-increasing {mono}; thermal n_r=0 error {max(e0, default=float('nan')):.3e} "
              f"vs max {max(errs, default=float('nan')):.3e}")
    verdict(5, lossless and all(mono.values()) and worst0, detail)


def test_criterion_6_identities(verdict):
    checks = {
        "transformation": props.test_transformation_equivalence,
        "idempotence": props.test_projection_idempotent,
        "rotation": props.test_objective_rotation_invariant,
    }
    failed = []
    for name, fn in checks.items():
        try:
            fn()
        except AssertionError:
            failed.append(name)
    verdict(6, not failed, f"150 randomized cases each; failed: {failed or 'none'}")


def test_criterion_7_runtime(verdict, random45):
    _, _, big = random45
    t0 = time.perf_counter()
    affine_gramians(generate_random_model(0, n=10))
    small = time.perf_counter() - t0
    verdict(7, big <= 2000 and small < 60, f"n=45 synthesis {big:.0f} s (limit 2000), n=10 {small:.1f} s (limit 60)")
