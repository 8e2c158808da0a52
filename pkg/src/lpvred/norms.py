"""Hankel and H-infinity norms of LTI instances and their maxima over the parameter box.

The parametric norms

    p_inf_H  = max_theta ||Sigma(theta)||_H
    p_inf_inf = max_theta ||Sigma(theta)||_inf

are evaluated on a finite :class:`EvaluationSet`. The maximum of these
norms is not attained at a vertex in general, so the default set is the
vertices plus 200 Latin-hypercube samples.
"""
from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import AffineLpvModel, LtiRealization, ParameterBox, difference_system, sample, vertices
from .errors import CapacityError, ConfigurationError, DegenerateModelError, DimensionError, StabilityError
from .gramians import exact_gramians

WHICH = ("hankel", "hinf")
MAX_GRID_POINTS = 1_000_000


# ---------------------------------------------------------------------------
# LTI norms
# ---------------------------------------------------------------------------

def hankel_norm(sys: LtiRealization) -> float:
    """Largest Hankel singular value, ``sqrt(lambda_max(P Q))``."""
    if sys.n_states == 0:
        return 0.0
    P, Q = exact_gramians(sys)
    # P Q is similar to P^(1/2) Q P^(1/2), so its spectrum is real and >= 0
    lam = np.linalg.eigvals(P @ Q).real
    return float(np.sqrt(max(lam.max(), 0.0)))


def hankel_singular_values(sys: LtiRealization) -> np.ndarray:
    if sys.n_states == 0:
        return np.zeros(0)
    P, Q = exact_gramians(sys)
    lam = np.sort(np.linalg.eigvals(P @ Q).real)[::-1]
    return np.sqrt(np.clip(lam, 0.0, None))


def to_continuous(sys: LtiRealization) -> LtiRealization:
    """Bilinear map ``z = (1 + s) / (1 - s)``; preserves the H-infinity norm."""
    if not sys.is_discrete:
        return sys
    n = sys.n_states
    if n == 0:
        return LtiRealization(sys.A, sys.B, sys.C, sys.D)
    E = sys.A + np.eye(n)
    lu = sla.lu_factor(E)
    EiA = sla.lu_solve(lu, sys.A - np.eye(n))
    EiB = sla.lu_solve(lu, sys.B)
    CEi = sla.lu_solve(lu, sys.C.T, trans=1).T
    r2 = np.sqrt(2.0)
    return LtiRealization(EiA, r2 * EiB, r2 * CEi, sys.D - sys.C @ EiB)


def frequency_response(sys: LtiRealization, omegas, chunk=64) -> np.ndarray:
    """``H(j w)`` (or ``H(e^{j w dt})``) for each frequency, shape ``(len(w), q, m)``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    q, m = sys.D.shape
    n = sys.n_states
    out = np.empty((omegas.size, q, m), dtype=complex)
    if n == 0:
        out[:] = sys.D
        return out
    # Hessenberg form keeps the shifted solves well conditioned and cheap
    Hh, Z = sla.hessenberg(sys.A, calc_q=True)
    Bz = Z.T @ sys.B
    Cz = sys.C @ Z
    I = np.eye(n)
    for lo in range(0, omegas.size, chunk):
        w = omegas[lo:lo + chunk]
        s = np.exp(1j * w * sys.dt) if sys.is_discrete else 1j * w
        M = s[:, None, None] * I - Hh
        X = np.linalg.solve(M, np.broadcast_to(Bz, (w.size,) + Bz.shape))
        out[lo:lo + chunk] = Cz @ X + sys.D
    return out


def sigma_max_response(sys: LtiRealization, omegas) -> np.ndarray:
    G = frequency_response(sys, omegas)
    if G.shape[1] == 0 or G.shape[2] == 0:
        return np.zeros(G.shape[0])
    return np.linalg.svd(G, compute_uv=False)[:, 0]


def frequency_grid(lo=1e-3, hi=1e3, count=400, include_dc=True) -> np.ndarray:
    """Log-spaced grid in rad/s, optionally with ``w = 0`` prepended."""
    w = np.logspace(np.log10(lo), np.log10(hi), count)
    return np.concatenate(([0.0], w)) if include_dc else w


def hinf_norm_grid(sys: LtiRealization, omegas=None, refine=0) -> tuple[float, float]:
    """Peak of ``sigma_max`` over a frequency grid; returns ``(peak, w_peak)``.

    ``refine`` extra passes each place a 50-point log grid around the current
    peak. No stability requirement: this is the evaluation used for the
    adjoint-product systems whose realizations are not stable.
    """
    w = frequency_grid() if omegas is None else np.asarray(omegas, dtype=float)
    sv = sigma_max_response(sys, w)
    i = int(np.argmax(sv))
    best, wbest = float(sv[i]), float(w[i])
    ws = np.sort(w)
    for _ in range(refine):
        j = int(np.searchsorted(ws, wbest))
        a = ws[max(j - 1, 0)]
        b = ws[min(j + 1, ws.size - 1)]
        ws = np.linspace(a, b, 50)
        sv = sigma_max_response(sys, ws)
        i = int(np.argmax(sv))
        if sv[i] > best:
            best, wbest = float(sv[i]), float(ws[i])
    return best, wbest


def _imag_axis_frequencies(sys: LtiRealization, gamma, im_tol=1e-6):
    """Frequencies where ``sigma(H(jw)) = gamma``: imaginary eigenvalues of the Hamiltonian."""
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    q, m = D.shape
    R = gamma ** 2 * np.eye(m) - D.T @ D
    S = gamma ** 2 * np.eye(q) - D @ D.T
    RiDt = np.linalg.solve(R, D.T)
    Ah = A + B @ RiDt @ C
    Ham = np.block([
        [Ah, B @ np.linalg.solve(R, B.T)],
        [-gamma ** 2 * C.T @ np.linalg.solve(S, C), -Ah.T],
    ])
    ev = np.linalg.eigvals(Ham)
    scale = max(np.abs(ev).max(initial=0.0), 1.0)
    hit = np.abs(ev.real) <= im_tol * scale
    w = np.sort(np.abs(ev[hit].imag))
    return np.unique(np.round(w / scale, 13)) * scale


def hinf_norm(sys: LtiRealization, rel_tol=1e-4, method="bisection", omegas=None) -> float:
    """H-infinity norm of a stable system.

    ``method="bisection"`` uses the two-step level-set iteration on the
    Hamiltonian (imaginary-axis eigenvalues); the result is within
    ``rel_tol`` of the true norm. ``method="grid"`` evaluates a frequency grid
    and needs no stability. Discrete systems go through the bilinear map.
    """
    if method == "grid":
        return hinf_norm_grid(sys, omegas)[0]
    if method != "bisection":
        raise ConfigurationError(f"unknown method {method!r}")
    if not sys.is_stable():
        raise StabilityError(f"H-infinity norm needs a stable system (margin {sys.stability_margin():.3g})")
    c = to_continuous(sys)
    q, m = c.D.shape
    if q == 0 or m == 0:
        return 0.0
    d = np.linalg.norm(c.D, 2)
    if c.n_states == 0:
        return float(d)
    # initial lower bound from DC, infinity and the pole frequencies
    p = c.poles()
    cand = np.concatenate(([0.0], np.abs(p.imag), np.abs(p)))
    gamma_lb = max(d, float(sigma_max_response(c, cand).max()))
    if gamma_lb == 0.0:
        # each entry of H is rational of degree <= n; vanishing at more than
        # 2n distinct frequencies means H is identically zero
        gamma_lb = float(sigma_max_response(c, frequency_grid(count=2 * c.n_states + 2)).max())
        if gamma_lb == 0.0:
            return 0.0
    for _ in range(100):
        gamma = (1 + rel_tol) * gamma_lb
        w = _imag_axis_frequencies(c, gamma)
        if w.size == 0:
            break
        mids = 0.5 * (w[:-1] + w[1:]) if w.size > 1 else w
        mids = np.concatenate((mids, w))
        new = float(sigma_max_response(c, mids).max())
        if new <= gamma_lb * (1 + 1e-12):
            break
        gamma_lb = new
    return float(gamma_lb)


def lti_norm(sys: LtiRealization, which, rel_tol=1e-4) -> float:
    if which == "hankel":
        return hankel_norm(sys)
    if which == "hinf":
        return hinf_norm(sys, rel_tol)
    raise ConfigurationError(f"which must be one of {WHICH}, got {which!r}")


# ---------------------------------------------------------------------------
# evaluation sets and parametric norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvaluationSet:
    """Finite set of parameter values on which parametric norms are maximized.

    kind: ``"vertices"``, ``"vertices+samples"`` (default, ``count`` Latin
    hypercube samples with ``seed``), ``"samples"`` or ``"grid"`` (``count``
    points per axis).
    """

    kind: str = "vertices+samples"
    count: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("vertices", "vertices+samples", "samples", "grid"):
            raise ConfigurationError(f"unknown evaluation set kind {self.kind!r}")
        if self.count < 0:
            raise ConfigurationError("count must be non-negative")

    def points(self, box: ParameterBox) -> list[np.ndarray]:
        l = box.n_params
        if self.kind == "grid":
            if self.count < 1 or float(self.count) ** l > MAX_GRID_POINTS:
                raise CapacityError(f"grid of {self.count}^{l} points exceeds {MAX_GRID_POINTS}")
            axes = [np.linspace(lo, hi, self.count) for lo, hi in zip(box.lower, box.upper)]
            return [np.array(p) for p in itertools.product(*axes)]
        pts = []
        if self.kind in ("vertices", "vertices+samples"):
            pts += vertices(box)
        if self.kind in ("samples", "vertices+samples") and l > 0:
            pts += sample(box, self.count, self.seed)
        return pts

    def describe(self):
        return {"kind": self.kind, "count": self.count, "seed": self.seed}


DEFAULT_EVAL_SET = EvaluationSet()


@dataclass(frozen=True, eq=False)
class ParametricNormResult:
    which: str
    value: float
    argmax_theta: np.ndarray
    evaluation_set: dict
    n_points: int
    values: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {
            "which": self.which,
            "value": self.value,
            "argmax_theta": np.asarray(self.argmax_theta).tolist(),
            "evaluation_set": self.evaluation_set,
            "n_points": self.n_points,
        }


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get("LPVRED_WORKERS", "1") or 1)
    return max(int(workers), 1)


def pointwise_norms(model: AffineLpvModel, which, points, rel_tol=1e-4, workers=None) -> np.ndarray:
    """Norm of ``model(theta)`` for every theta in ``points``."""
    if which not in WHICH:
        raise ConfigurationError(f"which must be one of {WHICH}, got {which!r}")
    f = lambda th: lti_norm(model.combine(np.concatenate(([1.0], th))), which, rel_tol)  # noqa: E731
    workers = _workers(workers)
    if workers == 1 or len(points) < 2:
        return np.array([f(th) for th in points])
    with ThreadPoolExecutor(workers) as ex:
        return np.array(list(ex.map(f, points)))


def p_norm(model: AffineLpvModel, which="hinf", eval_set: EvaluationSet | None = None,
           rel_tol=1e-4, workers=None, points=None) -> ParametricNormResult:
    """Maximum of the Hankel (``which="hankel"``) or H-infinity norm over the evaluation set.

    ``points`` overrides the set with an explicit list of parameter values.
    """
    eval_set = DEFAULT_EVAL_SET if eval_set is None else eval_set
    if points is None:
        points = eval_set.points(model.box)
        desc = eval_set.describe()
    else:
        points = [np.asarray(p, dtype=float).reshape(-1) for p in points]
        desc = {"kind": "explicit", "count": len(points), "seed": None}
    if len(points) == 0:
        raise ConfigurationError("empty evaluation set")
    for th in points:
        if th.size != model.n_params:
            raise DimensionError(f"theta has {th.size} entries, model has {model.n_params} parameters")
    vals = pointwise_norms(model, which, points, rel_tol, workers)
    i = int(np.argmax(vals))
    return ParametricNormResult(which, float(vals[i]), np.array(points[i]), desc, len(points), vals)


def relative_pinf_error(model: AffineLpvModel, reduced: AffineLpvModel, eval_set: EvaluationSet | None = None,
                        which="hinf", rel_tol=1e-4, workers=None, reference=None) -> float:
    """``p(Sigma - Sigma_r) / p(Sigma)`` with ``p`` the parametric H-infinity (or Hankel) norm.

    ``reference`` may carry a precomputed ``p(Sigma)`` on the same set.
    """
    den = p_norm(model, which, eval_set, rel_tol, workers).value if reference is None else float(reference)
    if den == 0.0:
        raise DegenerateModelError("the full model has zero parametric norm")
    num = p_norm(difference_system(model, reduced), which, eval_set, rel_tol, workers).value
    return num / den
