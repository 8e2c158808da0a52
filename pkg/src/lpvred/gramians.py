"""Exact Gramians at fixed parameters and affine upper-bound Gramians from vertex LMIs.

An affine Gramian is ``f(theta) = P_0 + sum_i theta_i P_i``. Its blocks are
found by imposing the Lyapunov inequality

    A(w) f(w) + f(w) A(w)^T + B(w) B(w)^T <= -delta I,   f(w) >= eps I

at every vertex ``w`` of the parameter box. Any solution dominates the
exact reachability Gramian at each point where the inequality holds.

Two SDP backends are available. ``"structured"`` drives cvxopt's cone LP
solver with a KKT routine that forms the Schur complement directly from
Kronecker products of the per-vertex Lyapunov operators; it is the one
that scales to tens of states. ``"cvxpy"`` states the same problem through
cvxpy and is meant for small problems and cross-checks.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import AffineLpvModel, LtiRealization, ParameterBox, sample, vertices
from .errors import (
    ConfigurationError,
    InfeasibleError,
    LyapunovConditioningWarning,
    SolverError,
    StabilityError,
)

log = logging.getLogger(__name__)

KINDS = ("P", "Q")


# ---------------------------------------------------------------------------
# exact Gramians
# ---------------------------------------------------------------------------

def _sym(X):
    return 0.5 * (X + X.T)


def exact_gramians(sys: LtiRealization):
    """Reachability and observability Gramians ``(P, Q)`` of a stable LTI system.

    Solves ``AP + PA^T + BB^T = 0`` and ``A^TQ + QA + C^TC = 0`` (or the
    Stein equations in discrete time). A warning of class
    :class:`LyapunovConditioningWarning` is issued when the Lyapunov
    operator is close to singular.
    """
    if sys.n_states == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    margin = sys.stability_margin()
    if not margin > 0:
        raise StabilityError(f"Gramians need a stable system (stability margin {margin:.3g})")
    A, B, C = sys.A, sys.B, sys.C
    if sys.is_discrete:
        P = sla.solve_discrete_lyapunov(A, B @ B.T)
        Q = sla.solve_discrete_lyapunov(A.T, C.T @ C)
        sep = 1.0 - (1.0 - margin) ** 2
    else:
        P = sla.solve_continuous_lyapunov(A, -B @ B.T)
        Q = sla.solve_continuous_lyapunov(A.T, -C.T @ C)
        sep = 2.0 * margin / max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    if sep < 1e-10:
        warnings.warn(
            f"Lyapunov operator nearly singular (relative separation {sep:.2e})",
            LyapunovConditioningWarning,
            stacklevel=2,
        )
    return _sym(P), _sym(Q)


def exact_gramian(model: AffineLpvModel, theta, kind="P"):
    P, Q = exact_gramians(model.at(theta))
    return P if kind == "P" else Q


# ---------------------------------------------------------------------------
# affine Gramians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffineGramian:
    """Stack of ``l+1`` symmetric blocks of an affine Gramian bound."""

    kind: str
    blocks: np.ndarray
    margin: float = 0.0
    objective: str = "trace_min"
    status: str = "optimal"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be 'P' or 'Q', got {self.kind!r}")
        blk = np.array(self.blocks, dtype=float)
        blk = 0.5 * (blk + np.transpose(blk, (0, 2, 1)))
        blk.setflags(write=False)
        object.__setattr__(self, "blocks", blk)

    @property
    def n_params(self):
        return self.blocks.shape[0] - 1

    @property
    def n_states(self):
        return self.blocks.shape[1]

    def combine(self, coeffs):
        return np.tensordot(np.asarray(coeffs, dtype=float), self.blocks, 1)

    def __call__(self, theta):
        return self.combine(np.concatenate(([1.0], np.asarray(theta, dtype=float).reshape(-1))))

    def shifted(self, offset):
        """Blocks for the chart ``theta' = theta - offset``."""
        offset = np.asarray(offset, dtype=float).reshape(-1)
        blk = self.blocks.copy()
        blk[0] = self.combine(np.concatenate(([1.0], offset)))
        return AffineGramian(self.kind, blk, self.margin, self.objective, self.status, dict(self.info))

    def to_dict(self):
        return {
            "kind": self.kind,
            "blocks": self.blocks.tolist(),
            "margin": self.margin,
            "objective": self.objective,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], np.asarray(d["blocks"], dtype=float), d.get("margin", 0.0),
                   d.get("objective", "trace_min"), d.get("status", "optimal"))


@dataclass(frozen=True, eq=False)
class LmiConstraint:
    """One matrix inequality ``expr(X) <= 0`` over the unknown blocks ``X_k``.

    ``expr(X) = sum_k alpha_k (A X_k + X_k A^T) + sum_k beta_k X_k + const``.
    """

    family: str
    alpha: np.ndarray
    beta: np.ndarray
    A: np.ndarray | None
    const: np.ndarray
    vertex: tuple = ()
    rate: tuple | None = None

    def expression(self, blocks):
        Fa = np.tensordot(self.alpha, blocks, 1)
        Fb = np.tensordot(self.beta, blocks, 1)
        out = Fb + self.const
        if self.A is not None:
            AF = self.A @ Fa
            out = out + AF + AF.T
        return _sym(out)

    def residual(self, blocks) -> float:
        """Largest eigenvalue of the constraint expression (feasible when <= 0)."""
        return float(np.linalg.eigvalsh(self.expression(blocks))[-1])


@dataclass(frozen=True, eq=False)
class LmiProblem:
    """Vertex LMIs for one affine Gramian.

    ``model`` is the model the inequalities were built from (the dual model
    for an observability problem). ``closed_form_count`` is the constraint count
    in the closed-form convention ``2^(l+1)``, ``2^(l+1) + l`` or
    ``3^(l+1)``; ``n_constraints`` is the number actually assembled and
    ``n_vertex_constraints`` the same without curvature constraints.
    """

    kind: str
    model: AffineLpvModel
    constraints: list
    objective: str
    delta: float
    eps: float
    rate_bounded: bool = False
    block_positivity: bool = False

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def n_vertex_constraints(self) -> int:
        """Constraints excluding the optional curvature family."""
        return sum(c.family != "curvature" for c in self.constraints)

    @property
    def closed_form_count(self) -> int:
        l = self.model.n_params
        if not self.rate_bounded:
            return 2 ** (l + 1)
        if self.block_positivity:
            return 2 ** (l + 1) + l
        return 3 ** (l + 1)

    @property
    def n_states(self):
        return self.model.n_states

    @property
    def n_blocks(self):
        return self.model.n_params + 1

    def objective_weights(self) -> np.ndarray:
        """Weights ``w_k`` such that ``sum_vertices trace f(v) = sum_k w_k trace X_k``."""
        if self.objective == "feasibility":
            return np.zeros(self.n_blocks)
        V = np.array(vertices(self.model.box)).reshape(-1, self.model.n_params)
        return np.concatenate(([len(V)], V.sum(axis=0)))

    def residuals(self, blocks):
        return np.array([c.residual(blocks) for c in self.constraints])


def _default_delta(model):
    return 1e-6 * np.linalg.norm(model.A[0], 2)


def _oriented(model: AffineLpvModel, kind):
    if kind not in KINDS:
        raise ConfigurationError(f"kind must be 'P' or 'Q', got {kind!r}")
    if model.is_discrete:
        raise ConfigurationError("vertex LMIs are implemented for continuous-time models only")
    return model if kind == "P" else model.dual()


def _vertex_data(model, w):
    c = np.concatenate(([1.0], w))
    A = np.tensordot(c, model.A, 1)
    B = np.tensordot(c, model.B, 1)
    return c, A, B @ B.T


def _curvature_constraints(model, k):
    """Per-axis convexity of the Lyapunov expression.

    ``A(t) f(t) + f(t) A(t)^T + B(t) B(t)^T`` is quadratic in ``t``; its
    second derivative along axis ``i`` is ``2 (A_i X_i + X_i A_i^T + B_i B_i^T)``.
    Requiring that to be PSD makes every quadratic form of the expression
    convex along each axis, so its maximum over the box sits at a vertex and
    the vertex inequalities hold on the whole box.
    """
    cons = []
    for i in range(1, k):
        e = np.zeros(k)
        e[i] = -1.0
        Bi = model.B[i]
        cons.append(LmiConstraint("curvature", e, np.zeros(k), model.A[i], -Bi @ Bi.T, (), None))
    return cons


def build_static_lmis(model: AffineLpvModel, kind="P", delta=None, eps=1e-8, objective="trace_min",
                      multiconvex=True) -> LmiProblem:
    """Lyapunov and positivity LMIs at every vertex (``2 * 2^l`` constraints).

    For ``kind="Q"`` the observability inequality
    ``A^T f + f A + C^T C <= -delta I`` is built from the dual model. With
    ``multiconvex`` (default) ``l`` curvature constraints are added so that
    the vertex inequalities certify the whole box; without them the
    inequality is only guaranteed at the vertices.
    """
    if objective not in ("trace_min", "feasibility"):
        raise ConfigurationError(f"unknown objective {objective!r}")
    work = _oriented(model, kind)
    n, k = work.n_states, work.n_params + 1
    delta = _default_delta(work) if delta is None else float(delta)
    I = np.eye(n)
    cons = []
    for w in vertices(work.box):
        c, A, BB = _vertex_data(work, w)
        cons.append(LmiConstraint("lyapunov", c, np.zeros(k), A, BB + delta * I, tuple(w)))
        cons.append(LmiConstraint("positivity", np.zeros(k), -c, None, eps * I, tuple(w)))
    if multiconvex:
        cons += _curvature_constraints(work, k)
    return LmiProblem(kind, work, cons, objective, delta, eps)


def build_rate_bounded_lmis(
    model: AffineLpvModel,
    kind="P",
    enforce_block_positivity=True,
    delta=None,
    eps=1e-8,
    objective="trace_min",
    multiconvex=True,
) -> LmiProblem:
    """LMIs for time-varying parameters with bounded rates.

    The derivative of the affine Gramian contributes ``sum_i rate_i X_i``.
    Each vertex carries the inequality at the upper rate vector and, unless
    ``enforce_block_positivity`` is set, also at the lower rate vector. With
    block positivity ``X_i >= eps I`` (``i >= 1``) the upper rate dominates
    and the lower family is dropped, leaving ``2^(l+1) + l`` constraints.
    ``multiconvex`` adds the same curvature constraints as the static case.
    """
    if objective not in ("trace_min", "feasibility"):
        raise ConfigurationError(f"unknown objective {objective!r}")
    work = _oriented(model, kind)
    if not work.box.has_rates:
        raise ConfigurationError("rate-bounded LMIs need rate_lower/rate_upper in the parameter box")
    n, k = work.n_states, work.n_params + 1
    delta = _default_delta(work) if delta is None else float(delta)
    I = np.eye(n)
    r_hi = np.concatenate(([0.0], work.box.rate_upper))
    r_lo = np.concatenate(([0.0], work.box.rate_lower))
    cons = []
    for w in vertices(work.box):
        c, A, BB = _vertex_data(work, w)
        cons.append(LmiConstraint("positivity", np.zeros(k), -c, None, eps * I, tuple(w)))
        if not enforce_block_positivity:
            cons.append(LmiConstraint("rate_lower", c, r_lo, A, BB + delta * I, tuple(w), tuple(r_lo[1:])))
        cons.append(LmiConstraint("rate_upper", c, r_hi, A, BB + delta * I, tuple(w), tuple(r_hi[1:])))
    if enforce_block_positivity:
        for i in range(1, k):
            e = np.zeros(k)
            e[i] = -1.0
            cons.append(LmiConstraint("block_positivity", np.zeros(k), e, None, eps * I, (), None))
    if multiconvex:
        cons += _curvature_constraints(work, k)
    return LmiProblem(kind, work, cons, objective, delta, eps, True, enforce_block_positivity)


# ---------------------------------------------------------------------------
# structured cvxopt backend
# ---------------------------------------------------------------------------

class _StructuredSdp:
    """Cone LP data and KKT solver for the vertex-LMI family.

    Unknowns are the lower triangles of the ``l+1`` symmetric blocks. Every
    cone has the form ``G_c x = sum_k alpha_ck L_c(X_k) + beta_ck X_k`` with
    ``L_c(X) = A_c X + X A_c^T``; the Schur complement
    ``G^T (W^T W)^{-1} G`` therefore splits into Kronecker-structured
    ``N x N`` pieces weighted by ``alpha alpha^T``, ``alpha beta^T`` etc.
    """

    def __init__(self, constraints, n, k, weights, scale_A, scale_B, batch=16, refine=2):
        self.n, self.k = n, k
        self.refine = refine
        self.N = n * (n + 1) // 2
        self.batch = batch
        self.rows, self.cols = np.tril_indices(n)
        self.offdiag = (self.rows != self.cols).astype(float)
        self.idx1 = self.rows + n * self.cols
        self.idx2 = self.cols + n * self.rows
        self.alpha = np.array([c.alpha for c in constraints])
        self.beta = np.array([c.beta for c in constraints]) / scale_A
        self.has_A = np.array([c.A is not None for c in constraints])
        self.Ac = np.array([c.A / scale_A if c.A is not None else np.zeros((n, n)) for c in constraints])
        self.h = -np.array([c.const for c in constraints]) / scale_B
        self.ncones = len(constraints)
        c = np.zeros((k, self.N))
        c[:, self.rows == self.cols] = 1.0
        self.c = (c * weights[:, None]).reshape(-1)

    # -- vector <-> block conversions ------------------------------------
    def unpack(self, x):
        X = np.zeros((self.k, self.n, self.n))
        xv = x.reshape(self.k, self.N)
        X[:, self.rows, self.cols] = xv
        X[:, self.cols, self.rows] = xv
        return X

    def adjoint_pack(self, Z):
        """Adjoint of :meth:`unpack` w.r.t. the trace inner product."""
        return (Z[:, self.rows, self.cols] + Z[:, self.cols, self.rows] * self.offdiag).reshape(-1)

    def cones_from(self, u):
        S = np.asarray(u).reshape(self.ncones, self.n, self.n).transpose(0, 2, 1)
        low = np.tril(S)
        return low + np.transpose(np.tril(S, -1), (0, 2, 1))

    # -- linear maps -------------------------------------------------------
    def G_apply(self, X):
        Fa = np.einsum("ck,kij->cij", self.alpha, X)
        Fb = np.einsum("ck,kij->cij", self.beta, X)
        AF = self.Ac @ Fa
        return AF + np.transpose(AF, (0, 2, 1)) + Fb

    def GT_apply(self, S):
        SA = S @ self.Ac
        L = SA + np.transpose(SA, (0, 2, 1))
        Z = np.einsum("ck,cij->kij", self.alpha, L) + np.einsum("ck,cij->kij", self.beta, S)
        return self.adjoint_pack(Z)

    def G(self, u, v, alpha=1.0, beta=0.0, trans="N"):
        vv = np.asarray(v)
        if trans == "N":
            out = self.G_apply(self.unpack(np.asarray(u).reshape(-1)))
            vv[:, 0] = alpha * np.transpose(out, (0, 2, 1)).reshape(-1) + beta * vv[:, 0]
        else:
            vv[:, 0] = alpha * self.GT_apply(self.cones_from(u)) + beta * vv[:, 0]

    # -- Schur complement ----------------------------------------------------
    def _gather_index(self):
        # H_rs = d_r d_s sum tr(S_r X S_s Y) over the four index orientations;
        # tr(E_ab X E_cd Y) = X[b, c] Y[d, a] = U[b n + c, d n + a] with
        # U = vec_row(X) vec_row(Y)^T summed over cones.
        n = self.n
        i, j = self.rows[:, None], self.cols[:, None]
        p, q = self.rows[None, :], self.cols[None, :]
        nn = n * n
        flat = lambda a, b, c, d: ((b * n + c) * nn + d * n + a).astype(np.int64)  # noqa: E731
        self._gidx = (flat(i, j, p, q), flat(i, j, q, p), flat(j, i, p, q), flat(j, i, q, p))
        d = 1.0 - 0.5 * (self.rows == self.cols)
        self._dw = np.outer(d, d)

    def schur(self, Vs):
        k, N, n = self.k, self.N, self.n
        if not hasattr(self, "_gidx"):
            self._gather_index()
        Xs, Ys, Cs = [], [], []
        for ci in range(self.ncones):
            V = Vs[ci]
            a, b = self.alpha[ci], self.beta[ci]
            if self.has_A[ci] and np.any(a):
                A = self.Ac[ci]
                B = V @ A
                Bt = B.T
                aa = 2.0 * np.outer(a, a)
                Xs += [A.T @ B, Bt]
                Ys += [V, Bt]
                Cs += [aa, aa]
                if np.any(b):
                    Xs += [Bt, V]
                    Ys += [V, Bt]
                    Cs += [2.0 * np.outer(a, b), 2.0 * np.outer(b, a)]
            if np.any(b):
                Xs.append(V)
                Ys.append(V)
                Cs.append(np.outer(b, b))
        Xm = np.array(Xs).reshape(len(Xs), n * n)
        Ym = np.array(Ys).reshape(len(Ys), n * n)
        Cm = np.array(Cs)
        H = np.empty((k, k, N, N))
        for k1 in range(k):
            for k2 in range(k1, k):
                w = Cm[:, k1, k2]
                nz = w != 0
                if not nz.any():
                    H[k1, k2] = 0.0
                else:
                    u = ((Xm[nz].T * w[nz]) @ Ym[nz]).ravel()
                    g = self._gidx
                    blk = u[g[0]] + u[g[1]] + u[g[2]] + u[g[3]]
                    blk *= self._dw
                    H[k1, k2] = blk
                if k2 != k1:
                    H[k2, k1] = H[k1, k2].T
        return H.transpose(0, 2, 1, 3).reshape(k * N, k * N)

    def _schur_kron(self, Vs):
        """Reference assembly from explicit Kronecker products (tests only)."""
        k, N = self.k, self.N
        H = np.zeros((k * k, N * N))
        for ci in range(self.ncones):
            V = Vs[ci]
            a, b = self.alpha[ci], self.beta[ci]
            if self.has_A[ci] and np.any(a):
                A = self.Ac[ci]
                VA = V @ A
                AtV = VA.T
                AtVA = A.T @ VA
                MLL = np.kron(V, AtVA) + np.kron(VA, AtV) + np.kron(AtV, VA) + np.kron(AtVA, V)
                H += np.outer(np.outer(a, a), self._reduce(MLL))
                if np.any(b):
                    MLI = self._reduce(np.kron(V, AtV) + np.kron(AtV, V))
                    H += np.outer(np.outer(a, b), MLI) + np.outer(np.outer(b, a), MLI.T)
            if np.any(b):
                H += np.outer(np.outer(b, b), self._reduce(np.kron(V, V)))
        return H.reshape(k, k, N, N).transpose(0, 2, 1, 3).reshape(k * N, k * N)

    def _reduce(self, M):
        Mc = M[:, self.idx1] + M[:, self.idx2] * self.offdiag
        return Mc[self.idx1] + Mc[self.idx2] * self.offdiag[:, None]

    def kktsolver(self, W):
        rti = [np.array(r) for r in W["rti"]]
        Vs = np.array([r @ r.T for r in rti])
        R = np.array(rti)
        Rt = np.transpose(R, (0, 2, 1))
        H = self.schur(Vs)
        H = _sym(H)
        try:
            cf = sla.cho_factor(H, lower=True, check_finite=False)
            solve = lambda rhs: sla.cho_solve(cf, rhs, check_finite=False)  # noqa: E731
        except np.linalg.LinAlgError:
            lu = sla.lu_factor(H + 1e-14 * np.trace(H) / H.shape[0] * np.eye(H.shape[0]))
            solve = lambda rhs: sla.lu_solve(lu, rhs)  # noqa: E731

        # scaled operator Gs(X) = W^{-T} G(X) and its adjoint
        Gs = lambda u: Rt @ self.G_apply(self.unpack(u)) @ R  # noqa: E731
        GsT = lambda S: self.GT_apply(R @ S @ Rt)  # noqa: E731

        def f(x, y, z):
            # Normal equations plus iterative refinement on the scaled KKT
            # system; the refinement recovers the accuracy the Schur
            # complement loses near the boundary of the cone.
            xv, zv = np.asarray(x), np.asarray(z)
            bx = xv[:, 0].copy()
            bz = Rt @ self.cones_from(z) @ R
            ux = solve(bx + GsT(bz))
            w = Gs(ux) - bz
            for _ in range(self.refine):
                rx = bx - GsT(w)
                rw = bz - Gs(ux) + w
                dx = solve(rx + GsT(rw))
                ux = ux + dx
                w = w + Gs(dx) - rw
            xv[:, 0] = ux
            zv[:, 0] = np.transpose(w, (0, 2, 1)).reshape(-1)

        return f


def _solve_structured(problem: LmiProblem, max_iters, tol, verbose):
    from cvxopt import matrix, solvers

    n, k = problem.n_states, problem.n_blocks
    scale_A = max(max(np.linalg.norm(c.A, 2) for c in problem.constraints if c.A is not None), 1e-300)
    BBs = [c.const for c in problem.constraints if c.family not in ("positivity", "block_positivity")]
    scale_B = max(max(np.linalg.norm(X, 2) for X in BBs), 1e-300)
    sdp = _StructuredSdp(problem.constraints, n, k, problem.objective_weights(), scale_A, scale_B)
    h = matrix(np.transpose(sdp.h, (0, 2, 1)).reshape(-1, 1))
    c = matrix(sdp.c.reshape(-1, 1)) if np.any(sdp.c) else matrix(np.zeros((k * sdp.N, 1)))
    dims = {"l": 0, "q": [], "s": [n] * sdp.ncones}
    opts = {
        "show_progress": verbose,
        "maxiters": max_iters,
        "abstol": tol,
        "reltol": tol,
        "feastol": max(tol, 1e-10),
    }
    calls = [0]

    def kkt(W):
        calls[0] += 1
        return sdp.kktsolver(W)

    try:
        sol = solvers.conelp(c, sdp.G, h, dims, kktsolver=kkt, options=opts)
    except ArithmeticError:
        # the scaling update can break down once the iterates sit on the
        # boundary; rerun and stop a couple of iterations earlier
        opts["maxiters"] = max(calls[0] - 3, 1)
        log.debug("conelp broke down after %d steps, rerunning with maxiters=%d", calls[0], opts["maxiters"])
        sol = solvers.conelp(c, sdp.G, h, dims, kktsolver=sdp.kktsolver, options=opts)
    x = None if sol["x"] is None else np.asarray(sol["x"])[:, 0]
    blocks = None if x is None else sdp.unpack(x) * (scale_B / scale_A)
    return sol["status"], blocks, {"iterations": sol.get("iterations"), "gap": sol.get("gap")}


def _solve_cvxpy(problem: LmiProblem, max_iters, tol, verbose):
    import cvxpy as cp

    n, k = problem.n_states, problem.n_blocks
    X = [cp.Variable((n, n), symmetric=True) for _ in range(k)]
    cons = []
    for con in problem.constraints:
        Fa = sum(a * Xk for a, Xk in zip(con.alpha, X) if a != 0)
        Fb = sum(b * Xk for b, Xk in zip(con.beta, X) if b != 0)
        expr = con.const
        if con.A is not None and not isinstance(Fa, int):
            AF = con.A @ Fa
            expr = expr + AF + AF.T
        if not isinstance(Fb, int):
            expr = expr + Fb
        cons.append(0.5 * (expr + expr.T) << 0)
    w = problem.objective_weights()
    obj = cp.Minimize(sum(wk * cp.trace(Xk) for wk, Xk in zip(w, X) if wk)) if np.any(w) else cp.Minimize(0)
    prob = cp.Problem(obj, cons)
    prob.solve(solver="CLARABEL", verbose=verbose, max_iter=max_iters, tol_gap_abs=tol, tol_gap_rel=tol,
               tol_feas=max(tol * 1e-1, 1e-10))
    status = {"optimal": "optimal", "optimal_inaccurate": "unknown"}.get(prob.status, prob.status)
    blocks = None if X[0].value is None else np.array([Xk.value for Xk in X])
    return status, blocks, {"iterations": prob.solver_stats.num_iters}


def solve_lmi(problem: LmiProblem, backend="structured", max_iters=100, tol=1e-7, verbose=False,
              solve_margin=2.0) -> AffineGramian:
    """Solve the vertex LMIs and return the affine Gramian.

    The inequalities are solved with margins inflated by ``solve_margin``;
    the returned blocks are then checked against the nominal ``delta`` and
    ``eps``. Raises :class:`InfeasibleError` when a vertex is unstable or the
    solver certifies infeasibility, :class:`SolverError` (carrying the best
    iterate) when it stalls or the check fails.
    """
    model = problem.model
    for w in vertices(model.box):
        if not model.at(w).is_stable():
            raise InfeasibleError(
                f"A(theta) is not Hurwitz at vertex {list(w)}; no Lyapunov certificate exists "
                "(the model is not quadratically stable)"
            )
    inflated = LmiProblem(
        problem.kind,
        model,
        [_inflate(c, problem, solve_margin) for c in problem.constraints],
        problem.objective,
        problem.delta * solve_margin,
        problem.eps * solve_margin,
        problem.rate_bounded,
        problem.block_positivity,
    )
    t0 = time.perf_counter()
    if backend == "structured":
        status, blocks, info = _solve_structured(inflated, max_iters, tol, verbose)
    elif backend == "cvxpy":
        status, blocks, info = _solve_cvxpy(inflated, max_iters, tol, verbose)
    else:
        raise ConfigurationError(f"unknown backend {backend!r}")
    info["seconds"] = time.perf_counter() - t0
    info["backend"] = backend
    if status in ("primal infeasible", "infeasible", "infeasible_inaccurate"):
        raise InfeasibleError(
            "vertex LMIs are infeasible; try a smaller margin delta or rescale the model "
            "(infeasibility can also mean the model is not quadratically stable)"
        )
    if blocks is None:
        raise SolverError(f"SDP solver returned status {status!r} without an iterate")
    res = problem.residuals(blocks)
    excess = res - _tolerances(problem)
    info["worst_residual"] = float(res.max())
    gram = AffineGramian(problem.kind, blocks, problem.delta, problem.objective,
                         "optimal" if status == "optimal" else "feasible", info)
    if excess.max() > 0:
        j = int(np.argmax(excess))
        raise SolverError(
            f"solver status {status!r}: {problem.constraints[j].family} LMI residual {res[j]:.3e} "
            "exceeds tolerance", best_iterate=gram
        )
    log.info("affine %s Gramian: %d LMIs, %.1fs, worst residual %.2e", problem.kind,
             problem.n_constraints, info["seconds"], res.max())
    return gram


def _curvature_slack(problem: LmiProblem):
    """Admissible curvature residual.

    If every axis curvature of the Lyapunov expression is at least ``-2 r``
    and the vertex residuals are at most ``-delta``, the expression stays
    below ``-delta + l r`` on the whole box, so ``r <= delta / (2 l)``
    keeps half the margin.
    """
    return problem.delta / (2 * max(problem.model.n_params, 1))


def _tolerances(problem: LmiProblem):
    slack = _curvature_slack(problem)
    return np.array([slack if c.family == "curvature" else 1e-9 for c in problem.constraints])


def _inflate(con: LmiConstraint, problem: LmiProblem, factor):
    n = con.const.shape[0]
    if con.family == "curvature":
        # Relaxed by half the admissible slack so the cone has an
        # interior even when A_i is singular.
        const = con.const - 0.5 * _curvature_slack(problem) * np.eye(n)
        return LmiConstraint(con.family, con.alpha, con.beta, con.A, const, con.vertex, con.rate)
    if con.family in ("positivity", "block_positivity"):
        const = con.const + (factor - 1) * problem.eps * np.eye(n)
    else:
        const = con.const + (factor - 1) * problem.delta * np.eye(n)
    return LmiConstraint(con.family, con.alpha, con.beta, con.A, const, con.vertex, con.rate)


def affine_gramians(model: AffineLpvModel, rate_bounded=False, objective="trace_min", backend="structured",
                    **kw):
    """Convenience wrapper returning ``(P_gram, Q_gram)``."""
    out = []
    for kind in KINDS:
        if rate_bounded:
            prob = build_rate_bounded_lmis(model, kind, objective=objective)
        else:
            prob = build_static_lmis(model, kind, objective=objective)
        out.append(solve_lmi(prob, backend=backend, **kw))
    return tuple(out)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class UpperBoundReport:
    kind: str
    n_points: int
    n_violations: int
    worst_margin: float
    worst_theta: np.ndarray

    @property
    def ok(self):
        return self.n_violations == 0


def check_points(box: ParameterBox, samples=200, seed=0):
    pts = vertices(box)
    if samples:
        pts = pts + sample(box, samples, seed)
    return pts


def verify_upper_bound(model: AffineLpvModel, gram: AffineGramian, samples=200, seed=0, rel_tol=1e-8):
    """Check ``f(theta) >= exact Gramian(theta)`` at the vertices and seeded samples.

    The margin at a point is ``lambda_min(f - G) / lambda_max(f)``; points
    with margin below ``-rel_tol`` count as violations. Nothing is raised.
    """
    pts = samples if isinstance(samples, list) else check_points(model.box, samples, seed)
    worst, where, bad = np.inf, None, 0
    for th in pts:
        G = exact_gramian(model, th, gram.kind)
        F = gram(th)
        scale = max(np.linalg.eigvalsh(F)[-1], np.finfo(float).tiny)
        m = np.linalg.eigvalsh(_sym(F - G))[0] / scale
        bad += m < -rel_tol
        if m < worst:
            worst, where = m, np.asarray(th)
    return UpperBoundReport(gram.kind, len(pts), int(bad), float(worst), where)


def max_real_eig(X):
    return float(np.max(np.linalg.eigvals(X).real))


def hankel_bound_ratio(model: AffineLpvModel, gP: AffineGramian, gQ: AffineGramian, points):
    """Largest ``lambda_max(P Q) / lambda_max(f_P f_Q)`` over the points (<= 1 when the bound holds)."""
    worst = 0.0
    for th in points:
        P, Q = exact_gramians(model.at(th))
        exact = max_real_eig(P @ Q)
        bound = max_real_eig(gP(th) @ gQ(th))
        worst = max(worst, exact / bound if bound > 0 else np.inf)
    return worst
