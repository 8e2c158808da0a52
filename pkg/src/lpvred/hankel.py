"""Parameter projection from affine Gramian products, and the subsystem-Hankel baseline.

With affine upper bounds ``f_P``, ``f_Q`` the mismatch at a vertex ``w`` is

    sigma_max( F_P(a) F_Q(a) - F_P(Pi a) F_Q(Pi a) ),    a = [1, w - c],

where ``F(phi) = sum_k phi_k X_k``, ``Pi = T_r T_r^T`` and ``c`` the chart
center (the box center by default). The optimizer minimizes the worst
vertex mismatch over matrices ``T_r`` with orthonormal columns.

Conventions
-----------
``n_r`` is the number of columns of ``T_r``. With ``keep_constant=True``
(default) the first column is pinned to the constant direction ``e_0`` and
the remaining ``n_r - 1`` columns are optimized; with ``keep_constant=False``
all columns are free. ``n_r = l + 1`` is the lossless identity projection.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .core import AffineLpvModel, ParameterProjection, lti_difference, vertices
from .errors import ConfigurationError, DimensionError, ValidationError
from .gramians import AffineGramian, affine_gramians, verify_upper_bound
from .norms import _workers, hankel_norm

log = logging.getLogger(__name__)

MAX_SELECTION_STARTS = 256


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of the multi-start Riemannian descent.

    ``temperature`` is the initial soft-max temperature relative to the
    current objective value; it is divided by ``anneal`` after each stage
    until it drops below ``min_temperature``. Every start first gets
    ``screen_iters`` iterations; the ``n_refine`` best are then run to
    convergence (at most ``max_iters`` iterations). With ``polish`` the
    refined candidates are finished by SLSQP on the epigraph form
    ``min t s.t. sigma_w <= t`` in a local chart, which handles the narrow
    nonsmooth valleys where plain descent zigzags.
    """

    n_starts: int = 20
    max_iters: int = 500
    armijo_c: float = 1e-4
    shrink: float = 0.5
    conv_tol: float = 1e-8
    temperature: float = 1e-3
    anneal: float = 10.0
    min_temperature: float = 1e-6
    screen_iters: int = 60
    n_refine: int = 4
    seed: int = 0
    keep_constant: bool = True
    polish: bool = True
    polish_iters: int = 200
    workers: int | None = None

    def __post_init__(self):
        for name in ("max_iters", "armijo_c", "conv_tol", "temperature", "min_temperature", "screen_iters",
                     "n_refine", "polish_iters"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.n_starts < 0:
            raise ConfigurationError("n_starts must be non-negative")
        if not 0 < self.shrink < 1 or not self.anneal > 1:
            raise ConfigurationError("need 0 < shrink < 1 and anneal > 1")

    def to_dict(self):
        return asdict(self)


class HankelObjectiveContext:
    """Affine Gramian blocks expressed in a (centered) chart plus the vertex coefficients.

    Parameters
    ----------
    gP, gQ : AffineGramian
        Reachability and observability bounds in the model chart.
    box : ParameterBox
        Box the vertices are taken from.
    center : array or None
        Chart origin. ``None`` uses the box center.
    """

    def __init__(self, gP: AffineGramian, gQ: AffineGramian, box, center=None):
        if gP.kind != "P" or gQ.kind != "Q":
            raise ValidationError("need one reachability (P) and one observability (Q) Gramian")
        if gP.blocks.shape != gQ.blocks.shape or gP.n_params != box.n_params:
            raise DimensionError("Gramian blocks and parameter box do not match")
        self.box = box
        self.center = box.center if center is None else np.asarray(center, dtype=float)
        self.P = gP.shifted(self.center).blocks
        self.Q = gQ.shifted(self.center).blocks
        V = np.array(vertices(box)).reshape(-1, box.n_params) - self.center
        self.coeffs = np.hstack([np.ones((len(V), 1)), V])
        FP = np.tensordot(self.coeffs, self.P, 1)
        FQ = np.tensordot(self.coeffs, self.Q, 1)
        self.full = FP @ FQ  # vertex products, computed once
        self.scale = float(np.linalg.norm(self.full, 2, axis=(1, 2)).max())

    @classmethod
    def from_model(cls, model: AffineLpvModel, gP=None, gQ=None, verify=True, center=None, **solve_kw):
        """Build the context, synthesizing and checking the Gramian bounds as needed."""
        if gP is None or gQ is None:
            gP, gQ = affine_gramians(model, **solve_kw)
        if verify:
            for g in (gP, gQ):
                rep = verify_upper_bound(model, g)
                if not rep.ok:
                    raise ValidationError(f"{g.kind} bound violated at theta={rep.worst_theta} "
                                          f"(margin {rep.worst_margin:.3e})")
        return cls(gP, gQ, model.box, center)

    @property
    def n_blocks(self):
        return self.P.shape[0]

    # -- objective ----------------------------------------------------------
    def _mismatch(self, Pi):
        phi = self.coeffs @ Pi  # Pi symmetric
        FP = np.tensordot(phi, self.P, 1)
        FQ = np.tensordot(phi, self.Q, 1)
        return phi, FP, FQ, self.full - FP @ FQ

    def vertex_values(self, T) -> np.ndarray:
        T = np.asarray(T, dtype=float)
        *_, E = self._mismatch(T @ T.T)
        return np.linalg.svd(E, compute_uv=False)[:, 0]

    def value(self, T) -> float:
        return float(self.vertex_values(T).max())

    def _vertex_sensitivities(self, phi, FP, FQ, E):
        U, s, Vh = np.linalg.svd(E)
        u, v = U[:, :, 0], Vh[:, 0, :]
        # d sigma_w / d phi_k = -u^T (P_k F_Q + F_P Q_k) v
        Qv = np.einsum("wij,wj->wi", FQ, v)
        Pu = np.einsum("wji,wj->wi", FP, u)
        g = -(np.einsum("wi,kij,wj->wk", u, self.P, Qv) + np.einsum("wi,kij,wj->wk", Pu, self.Q, v))
        return s[:, 0], g

    def vertex_grads(self, T):
        """Vertex values and their symmetric gradients with respect to ``Pi = T T^T``."""
        T = np.asarray(T, dtype=float)
        sig, g = self._vertex_sensitivities(*self._mismatch(T @ T.T))
        H = np.einsum("wk,wl->wkl", g, self.coeffs)
        return sig, H + np.transpose(H, (0, 2, 1))

    def value_and_grad(self, T, tau):
        """Soft-max of the vertex values at temperature ``tau`` and its Euclidean gradient in ``T``."""
        T = np.asarray(T, dtype=float)
        sig, g = self._vertex_sensitivities(*self._mismatch(T @ T.T))
        top = sig.max()
        if tau > 0:
            e = np.exp((sig - top) / tau)
            wts = e / e.sum()
            f = top + tau * np.log(e.sum())
        else:
            wts = (sig == top).astype(float)
            wts /= wts.sum()
            f = top
        # phi = T T^T a, so dsigma/dT = (g a^T + a g^T) T
        G = np.einsum("w,wk,wl->kl", wts, g, self.coeffs)
        grad = (G + G.T) @ T
        return f, float(sig.max()), grad


def objective(ctx: HankelObjectiveContext, T_r) -> float:
    """Worst-vertex spectral norm of the Gramian-product mismatch for ``T_r``."""
    T = ParameterProjection(T_r).T_r
    if T.shape[0] != ctx.n_blocks:
        raise DimensionError(f"T_r has {T.shape[0]} rows, expected {ctx.n_blocks}")
    return ctx.value(T)


# ---------------------------------------------------------------------------
# Stiefel machinery
# ---------------------------------------------------------------------------

def _qr_retract(X):
    q, r = np.linalg.qr(X)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def _tangent(W, G):
    S = W.T @ G
    return G - W @ (0.5 * (S + S.T))


class _Frame:
    """``T = [F, B W]``: fixed columns ``F`` plus a Stiefel variable ``W`` in the complement basis ``B``."""

    def __init__(self, k, n_r, keep_constant):
        if keep_constant:
            self.F = np.eye(k)[:, :1]
            self.B = np.eye(k)[:, 1:]
            self.p = n_r - 1
        else:
            self.F = np.zeros((k, 0))
            self.B = np.eye(k)
            self.p = n_r
        self.d = self.B.shape[1]

    def T(self, W):
        return np.hstack([self.F, self.B @ W])

    def W_from(self, T):
        """Best variable block for a candidate ``T`` (projected, re-orthonormalized)."""
        X = self.B.T @ np.asarray(T, dtype=float)
        if X.shape[1] > self.p:
            # keep the p dominant directions of the complement part
            U, s, _ = np.linalg.svd(X, full_matrices=False)
            X = U[:, : self.p]
        if X.shape[1] < self.p:
            X = np.hstack([X, np.zeros((self.d, self.p - X.shape[1]))])
        return X

    def random(self, rng):
        return _qr_retract(rng.standard_normal((self.d, self.p)))

    def complete(self, X, rng):
        """Orthonormalize ``X``, filling rank-deficient columns with random orthogonal ones."""
        X = np.asarray(X, dtype=float)
        Q, R = np.linalg.qr(X)
        good = np.abs(np.diag(R)) > 1e-8
        keep = Q[:, good]
        while keep.shape[1] < self.p:
            r = rng.standard_normal(self.d)
            r -= keep @ (keep.T @ r)
            if np.linalg.norm(r) > 1e-6:
                keep = np.hstack([keep, (r / np.linalg.norm(r))[:, None]])
        return _qr_retract(keep)


def _descend(ctx, frame, W0, cfg: OptimizerConfig, max_iters=None):
    """Annealed soft-max descent from ``W0``; returns the best true-max iterate seen."""
    max_iters = cfg.max_iters if max_iters is None else max_iters
    W = W0
    best_val = ctx.value(frame.T(W))
    best_W = W
    iters = 0
    base = max(best_val, ctx.scale * 1e-12, 1e-300)
    temp = cfg.temperature
    while iters < max_iters:
        tau = temp * base
        f, true, G = ctx.value_and_grad(frame.T(W), tau)
        step = 1.0 / max(ctx.scale, 1e-300)
        stalled = False
        while iters < max_iters:
            iters += 1
            xi = _tangent(W, frame.B.T @ G[:, frame.F.shape[1]:])
            nrm2 = float(np.sum(xi * xi))
            if np.sqrt(nrm2) <= cfg.conv_tol * ctx.scale:
                stalled = True
                break
            t = step
            while True:
                Wn = _qr_retract(W - t * xi)
                fn, tn, Gn = ctx.value_and_grad(frame.T(Wn), tau)
                if fn <= f - cfg.armijo_c * t * nrm2 or t < 1e-16 * step:
                    break
                t *= cfg.shrink
            if fn > f:
                stalled = True
                break
            if tn < best_val:
                best_val, best_W = tn, Wn
            dec = f - fn
            W, f, G = Wn, fn, Gn
            step = t * 2.0
            if dec <= cfg.conv_tol * max(abs(f), 1e-300):
                stalled = True
                break
        if temp <= cfg.min_temperature:
            break
        temp /= cfg.anneal
        base = max(best_val, ctx.scale * 1e-12, 1e-300)
        if not stalled:
            break
    return best_val, best_W, iters


def _polish(ctx, frame, W0, cfg: OptimizerConfig):
    """Epigraph SLSQP in the chart ``span(W0 + N Z)``, ``N`` the complement of ``W0``."""
    d, p = frame.d, frame.p
    N = np.linalg.svd(W0, full_matrices=True)[0][:, p:]
    sc = max(ctx.scale, 1e-300)
    nv = len(ctx.coeffs)
    cache = {}

    def parts(z):
        key = z.tobytes()
        if key not in cache:
            X = W0 + N @ z.reshape(d - p, p)
            Wq = _qr_retract(X)
            sig, Hs = ctx.vertex_grads(frame.T(Wq))
            # Pi_B = X (X^T X)^-1 X^T, so dh/dX = (I - Pi_B) H_B X (X^T X)^-1
            HB = np.einsum("ki,wkl,lj->wij", frame.B, Hs, frame.B)
            GX = (np.eye(d) - Wq @ Wq.T) @ HB @ X @ np.linalg.inv(X.T @ X)
            cache.clear()
            cache[key] = (sig / sc, np.einsum("ia,wij->waj", N, GX).reshape(nv, -1) / sc)
        return cache[key]

    x0 = np.zeros((d - p) * p + 1)
    x0[-1] = ctx.value(frame.T(W0)) / sc
    e_t = np.zeros_like(x0)
    e_t[-1] = 1.0
    cons = {"type": "ineq",
            "fun": lambda x: x[-1] - parts(x[:-1])[0],
            "jac": lambda x: np.hstack([-parts(x[:-1])[1], np.ones((nv, 1))])}
    try:
        res = minimize(lambda x: x[-1], x0, jac=lambda x: e_t, constraints=[cons], method="SLSQP",
                       options={"maxiter": cfg.polish_iters, "ftol": 1e-14})
        W = _qr_retract(W0 + N @ res.x[:-1].reshape(d - p, p))
    except (np.linalg.LinAlgError, ValueError):
        return np.inf, W0
    val = ctx.value(frame.T(W))
    return (val, W) if np.isfinite(val) else (np.inf, W0)


def _selection_starts(frame):
    """All axis-selection starts (capped); columns index the complement basis."""
    d = frame.d
    combos = itertools.combinations(range(d), frame.p)
    out = []
    for idx in itertools.islice(combos, MAX_SELECTION_STARTS):
        out.append(np.eye(d)[:, list(idx)])
    return out


def optimize_projection(ctx: HankelObjectiveContext, n_r: int, cfg: OptimizerConfig | None = None,
                        warm_starts=(), nested=None) -> ParameterProjection:
    """Multi-start minimization of :func:`objective` over orthonormal ``T_r``.

    Starts: ``cfg.n_starts`` random frames, every axis selection, the
    ``warm_starts`` (any ``(l+1) x c`` matrices, e.g. sensitivity-based
    projections) and ``nested`` (a lower-order solution padded with a random
    orthogonal column). The returned ``T_r`` has an objective no larger than
    any start. Ties are broken by start index, so the result is
    deterministic for a fixed seed.
    """
    cfg = OptimizerConfig() if cfg is None else cfg
    k = ctx.n_blocks
    l = k - 1
    if not 1 <= n_r <= k:
        raise DimensionError(f"n_r must lie in [1, {k}], got {n_r}")
    frame = _Frame(k, n_r, cfg.keep_constant)
    rng = np.random.default_rng(cfg.seed)
    if frame.p == 0 or frame.p == frame.d:
        W = np.eye(frame.d)[:, : frame.p]
        T = frame.T(W)
        return ParameterProjection(T, "hankel", ctx.value(T), cfg.seed)

    starts = [frame.random(rng) for _ in range(cfg.n_starts)]
    starts += _selection_starts(frame)
    for T0 in warm_starts:
        starts.append(frame.complete(frame.W_from(T0), rng))
    if nested is not None:
        Tn = nested.T_r if isinstance(nested, ParameterProjection) else np.asarray(nested, dtype=float)
        starts.append(frame.complete(frame.W_from(Tn), rng))

    workers = _workers(cfg.workers)

    def pmap(fn, items):
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]

    screened = pmap(lambda W0: _descend(ctx, frame, W0, cfg, cfg.screen_iters), starts)
    order = sorted(range(len(screened)), key=lambda i: (screened[i][0], i))[: cfg.n_refine]
    refined = pmap(lambda i: _descend(ctx, frame, screened[i][1], cfg), order)
    results = [(r[0], i, r[1]) for r, i in zip(refined, order)]
    results += [(screened[i][0], i, screened[i][1]) for i in order]
    if cfg.polish and frame.d > frame.p:
        polished = pmap(lambda r: _polish(ctx, frame, r[2], cfg), results[: len(order)])
        results += [(v, i, W) for (v, W), i in zip(polished, order)]
    best_val, _, best_W = min(results, key=lambda r: (r[0], r[1]))
    T = frame.T(best_W)
    val = ctx.value(T)
    log.info("hankel projection n_r=%d: objective %.4e from %d starts", n_r, val, len(starts))
    return ParameterProjection(T, "hankel", val, cfg.seed)


# ---------------------------------------------------------------------------
# subsystem baseline
# ---------------------------------------------------------------------------

def subsystem_scores(model: AffineLpvModel, center=None) -> np.ndarray:
    """Hankel norm of ``Sigma(c + (u_i - c_i) e_i) - Sigma(c)`` for each parameter ``i``."""
    box = model.box
    c = box.center if center is None else np.asarray(center, dtype=float)
    base = np.concatenate(([1.0], c))
    ref = model.combine(base)
    ref.require_stable()
    scores = np.zeros(model.n_params)
    for i in range(model.n_params):
        a = base.copy()
        a[i + 1] = box.upper[i]
        probe = model.combine(a)
        probe.require_stable()
        scores[i] = hankel_norm(lti_difference(probe, ref))
    return scores


def subsystem_hankel_baseline(model: AffineLpvModel, n_r: int, center=None) -> ParameterProjection:
    """Keep ``e_0`` and the ``n_r - 1`` parameters with the largest subsystem Hankel score.

    Ties go to the lower parameter index. The projection is meant to be
    applied in the centered chart, which freezes the removed parameters at
    the box center.
    """
    l = model.n_params
    if not 1 <= n_r <= l + 1:
        raise DimensionError(f"n_r must lie in [1, {l + 1}], got {n_r}")
    scores = subsystem_scores(model, center)
    order = sorted(range(l), key=lambda i: (-scores[i], i))
    keep = sorted(order[: n_r - 1])
    proj = ParameterProjection.from_columns([0] + [i + 1 for i in keep], l, method="subsys")
    return proj


__all__ = [
    "HankelObjectiveContext",
    "OptimizerConfig",
    "objective",
    "optimize_projection",
    "subsystem_hankel_baseline",
    "subsystem_scores",
]
