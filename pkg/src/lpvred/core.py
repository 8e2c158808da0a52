"""Affine LPV models, parameter boxes and parameter-space projections.

A model is stored as four stacks of coefficient blocks ``A[k], B[k], C[k],
D[k]`` for ``k = 0..l`` so that ``A(theta) = A[0] + sum_i theta_i A[i]``.
The column-stacked form used in the literature (blocks on top of each other)
is available through :meth:`AffineLpvModel.stacked` and
:meth:`AffineLpvModel.from_stacked`.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .errors import (
    CapacityError,
    ConfigurationError,
    DimensionError,
    DomainError,
    StabilityError,
    ValidationError,
)

MAX_VERTEX_PARAMS = 24


def _frozen(a, ndim=None, dtype=float):
    arr = np.array(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParameterBox:
    """Axis-aligned box of admissible parameter values, optionally with rate bounds."""

    lower: np.ndarray
    upper: np.ndarray
    rate_lower: np.ndarray | None = None
    rate_upper: np.ndarray | None = None

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower), 1) if np.size(self.lower) else _frozen(np.zeros(0))
        hi = _frozen(np.atleast_1d(self.upper), 1) if np.size(self.upper) else _frozen(np.zeros(0))
        if lo.shape != hi.shape:
            raise DimensionError(f"lower {lo.shape} and upper {hi.shape} differ in length")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValidationError(f"lower > upper for parameter {bad + 1}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if (self.rate_lower is None) != (self.rate_upper is None):
            raise ConfigurationError("rate_lower and rate_upper must be given together")
        if self.rate_lower is not None:
            rlo = _frozen(np.reshape(self.rate_lower, -1))
            rhi = _frozen(np.reshape(self.rate_upper, -1))
            if rlo.shape != lo.shape or rhi.shape != lo.shape:
                raise DimensionError("rate bounds must have one entry per parameter")
            if np.any(rlo > rhi):
                raise ValidationError("rate_lower > rate_upper")
            object.__setattr__(self, "rate_lower", rlo)
            object.__setattr__(self, "rate_upper", rhi)

    @classmethod
    def unit(cls, n_params, rate_bound=None):
        """``[0, 1]^n_params``; ``rate_bound`` gives symmetric rate limits."""
        rl = ru = None
        if rate_bound is not None:
            rl, ru = -rate_bound * np.ones(n_params), rate_bound * np.ones(n_params)
        return cls(np.zeros(n_params), np.ones(n_params), rl, ru)

    @property
    def n_params(self) -> int:
        return self.lower.size

    @property
    def has_rates(self) -> bool:
        return self.rate_lower is not None

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def check(self, theta, tol=1e-9) -> np.ndarray:
        """Return ``theta`` as an array, raising DomainError if it leaves the box."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.n_params:
            raise DimensionError(f"theta has {theta.size} entries, model has {self.n_params} parameters")
        below = theta < self.lower - tol
        above = theta > self.upper + tol
        if below.any() or above.any():
            i = int(np.argmax(below | above))
            raise DomainError(
                f"theta_{i + 1} = {theta[i]:.6g} outside [{self.lower[i]:.6g}, {self.upper[i]:.6g}]"
            )
        return theta

    def shifted(self, offset) -> "ParameterBox":
        offset = np.asarray(offset, dtype=float)
        return ParameterBox(self.lower - offset, self.upper - offset, self.rate_lower, self.rate_upper)

    def to_dict(self):
        lst = lambda a: None if a is None else a.tolist()  # noqa: E731
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "rate_lower": lst(self.rate_lower),
            "rate_upper": lst(self.rate_upper),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["lower"], d["upper"], d.get("rate_lower"), d.get("rate_upper"))


def vertices(box: ParameterBox) -> list[np.ndarray]:
    """All ``2**l`` corners of the box in lexicographic order (lower before upper)."""
    l = box.n_params
    if l > MAX_VERTEX_PARAMS:
        raise CapacityError(
            f"{l} parameters give 2^{l} vertices; use sample() instead of vertex enumeration"
        )
    pairs = list(zip(box.lower, box.upper))
    return [np.array(v, dtype=float) for v in itertools.product(*pairs)]


def sample(box: ParameterBox, count: int, seed=0) -> list[np.ndarray]:
    """Latin-hypercube samples of the box, reproducible for a fixed seed."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    l = box.n_params
    if l == 0:
        return [np.zeros(0) for _ in range(count)]
    u = qmc.LatinHypercube(d=l, seed=seed).random(count)
    pts = box.lower + u * box.width
    return [p for p in pts]


@dataclass(frozen=True, eq=False)
class LtiRealization:
    """A fixed-parameter state-space system. ``dt=None`` means continuous time."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float | None = None

    def __post_init__(self):
        A, B, C, D = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (self.A, self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, val)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def is_discrete(self):
        return self.dt is not None

    def poles(self):
        return np.linalg.eigvals(self.A) if self.n_states else np.zeros(0)

    def stability_margin(self) -> float:
        """Negative spectral abscissa (continuous) or ``1 - spectral radius`` (discrete)."""
        p = self.poles()
        if p.size == 0:
            return np.inf
        if self.is_discrete:
            return 1.0 - np.max(np.abs(p))
        return -np.max(p.real)

    def is_stable(self) -> bool:
        return self.stability_margin() > 0

    def require_stable(self):
        if not self.is_stable():
            kind = "Schur" if self.is_discrete else "Hurwitz"
            raise StabilityError(f"A is not {kind} (margin {self.stability_margin():.3g})")


@dataclass(frozen=True, eq=False)
class AffineLpvModel:
    """State-space model with matrices affine in the parameter vector.

    Parameters
    ----------
    A, B, C, D
        Coefficient stacks of shape ``(l+1, n, n)``, ``(l+1, n, m)``,
        ``(l+1, q, n)`` and ``(l+1, q, m)``. Index 0 is the constant term.
    box
        Admissible parameter box.
    dt
        Sampling time for discrete-time models, ``None`` for continuous time.
    original_box
        The box before normalization to ``[0, 1]^l``, kept for reporting.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    box: ParameterBox
    dt: float | None = None
    original_box: ParameterBox | None = field(default=None)

    def __post_init__(self):
        A, B, C, D = (_frozen(x, 3) for x in (self.A, self.B, self.C, self.D))
        k, n, n2 = A.shape
        if n != n2:
            raise DimensionError(f"A blocks must be square, got {A.shape[1:]}")
        m, q = B.shape[2], C.shape[1]
        if B.shape != (k, n, m) or C.shape != (k, q, n) or D.shape != (k, q, m):
            raise DimensionError(
                f"inconsistent block stacks A{A.shape} B{B.shape} C{C.shape} D{D.shape}"
            )
        if self.box.n_params != k - 1:
            raise DimensionError(f"{k} blocks need a box with {k - 1} parameters, got {self.box.n_params}")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, val)

    # -- dimensions --------------------------------------------------------
    @property
    def n_states(self) -> int:
        return self.A.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[2]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[1]

    @property
    def n_params(self) -> int:
        return self.A.shape[0] - 1

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None

    # -- construction helpers ---------------------------------------------
    @classmethod
    def from_stacked(cls, A_st, B_st, C_st, D_st, box, dt=None):
        """Build from column-stacked matrices (``n(l+1) x n`` for A, etc.)."""
        k = box.n_params + 1

        def split(M):
            M = np.asarray(M, dtype=float)
            if M.shape[0] % k:
                raise DimensionError(f"stacked matrix with {M.shape[0]} rows is not divisible into {k} blocks")
            return M.reshape(k, M.shape[0] // k, M.shape[1])

        return cls(split(A_st), split(B_st), split(C_st), split(D_st), box, dt)

    def stacked(self):
        """Column-stacked ``(A^theta, B^theta, C^theta, D^theta)``."""
        return tuple(X.reshape(-1, X.shape[2]) for X in (self.A, self.B, self.C, self.D))

    def with_blocks(self, A=None, B=None, C=None, D=None, box=None) -> "AffineLpvModel":
        return AffineLpvModel(
            self.A if A is None else A,
            self.B if B is None else B,
            self.C if C is None else C,
            self.D if D is None else D,
            self.box if box is None else box,
            self.dt,
            self.original_box,
        )

    # -- evaluation --------------------------------------------------------
    def combine(self, coeffs) -> LtiRealization:
        """Evaluate ``sum_k coeffs[k] * block_k`` without any box check.

        ``coeffs`` has ``l+1`` entries; for an ordinary parameter value it is
        ``[1, theta_1, ..., theta_l]``.
        """
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        if c.size != self.n_params + 1:
            raise DimensionError(f"need {self.n_params + 1} coefficients, got {c.size}")
        return LtiRealization(
            np.tensordot(c, self.A, 1),
            np.tensordot(c, self.B, 1),
            np.tensordot(c, self.C, 1),
            np.tensordot(c, self.D, 1),
            self.dt,
        )

    def at(self, theta, tol=1e-9) -> LtiRealization:
        return evaluate_at(self, theta, tol)

    # -- reparameterizations ----------------------------------------------
    def shifted(self, offset) -> "AffineLpvModel":
        """Same model in the chart ``theta' = theta - offset`` (offset folded into block 0)."""
        offset = np.asarray(offset, dtype=float).reshape(-1)
        if not offset.any():
            return self
        c = np.concatenate(([1.0], offset))
        blocks = []
        for X in (self.A, self.B, self.C, self.D):
            Y = X.copy()
            Y[0] = np.tensordot(c, X, 1)
            blocks.append(Y)
        return self.with_blocks(*blocks, box=self.box.shifted(offset))

    def normalized(self) -> "AffineLpvModel":
        """Rescale so that every parameter ranges over ``[0, 1]``.

        ``theta = lower + width * theta'``; zero-width coordinates keep their
        constant value folded into block 0 and get a zero coefficient block.
        """
        lo, w = self.box.lower, self.box.width
        if np.all(lo == 0) and np.all(w == 1):
            return self
        scale = np.concatenate(([1.0], w))
        c0 = np.concatenate(([1.0], lo))
        blocks = []
        for X in (self.A, self.B, self.C, self.D):
            Y = X * scale[:, None, None]
            Y[0] = np.tensordot(c0, X, 1)
            blocks.append(Y)
        rl = ru = None
        if self.box.has_rates:
            safe = np.where(w > 0, w, 1.0)
            rl, ru = self.box.rate_lower / safe, self.box.rate_upper / safe
        unit = ParameterBox(np.zeros_like(lo), np.ones_like(lo), rl, ru)
        return AffineLpvModel(*blocks, unit, self.dt, self.original_box or self.box)

    def dual(self) -> "AffineLpvModel":
        """Transposed model ``(A^T, C^T, B^T, D^T)``; swaps reachability and observability."""
        t = lambda X: np.transpose(X, (0, 2, 1))  # noqa: E731
        return AffineLpvModel(t(self.A), t(self.C), t(self.B), t(self.D), self.box, self.dt, self.original_box)

    # -- stability guard ---------------------------------------------------
    def stability_points(self, n_samples=50, seed=0):
        pts = vertices(self.box) if self.n_params <= MAX_VERTEX_PARAMS else []
        if n_samples and self.n_params:
            pts = pts + sample(self.box, n_samples, seed)
        return pts

    def stability_margin(self, n_samples=50, seed=0):
        """Worst stability margin over vertices plus seeded interior samples, and where."""
        worst, where = np.inf, None
        for th in self.stability_points(n_samples, seed):
            s = self.combine(np.concatenate(([1.0], th))).stability_margin()
            if s < worst:
                worst, where = s, th
        return worst, where

    def is_stable(self, n_samples=50, seed=0) -> bool:
        return self.stability_margin(n_samples, seed)[0] > 0

    def require_stable(self, n_samples=50, seed=0):
        s, th = self.stability_margin(n_samples, seed)
        if not s > 0:
            raise StabilityError(f"model unstable at theta={np.round(th, 6).tolist()} (margin {s:.3g})")

    # -- serialization -----------------------------------------------------
    def to_dict(self):
        d = {
            "n": self.n_states,
            "m": self.n_inputs,
            "q": self.n_outputs,
            "l": self.n_params,
            "time": "discrete" if self.is_discrete else "continuous",
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "theta": self.box.to_dict(),
        }
        if self.is_discrete:
            d["step"] = self.dt
        if self.original_box is not None:
            d["original_theta"] = self.original_box.to_dict()
        return d

    @classmethod
    def from_dict(cls, d, normalize=True):
        n, m, q, l = (int(d[k]) for k in ("n", "m", "q", "l"))

        def blocks(key, shape):
            arr = np.asarray(d[key], dtype=float)
            if arr.size == 0:
                arr = np.zeros((l + 1,) + shape)
            arr = arr.reshape((l + 1,) + shape)
            return arr

        time = d.get("time", "continuous")
        if time not in ("continuous", "discrete"):
            raise ConfigurationError(f"unknown time kind {time!r}")
        dt = float(d["step"]) if time == "discrete" else None
        model = cls(
            blocks("A", (n, n)), blocks("B", (n, m)), blocks("C", (q, n)), blocks("D", (q, m)),
            ParameterBox.from_dict(d["theta"]), dt,
            ParameterBox.from_dict(d["original_theta"]) if d.get("original_theta") else None,
        )
        return model.normalized() if normalize else model


def evaluate_at(model: AffineLpvModel, theta, tol=1e-9) -> LtiRealization:
    """``(A(theta), B(theta), C(theta), D(theta))`` after checking ``theta`` is in the box."""
    theta = model.box.check(theta, tol)
    return model.combine(np.concatenate(([1.0], theta)))


def _orthonormality_defect(T):
    return np.linalg.norm(T.T @ T - np.eye(T.shape[1]))


def apply_transformation(model: AffineLpvModel, T) -> AffineLpvModel:
    """Re-express the model in the transformed coordinates ``[1, theta] @ T``.

    The returned blocks are ``(T^T kron I) A^theta``; evaluating them with
    :meth:`AffineLpvModel.combine` at ``[1, theta] @ T`` gives back the
    original matrices.
    """
    T = np.asarray(T, dtype=float)
    k = model.n_params + 1
    if T.shape != (k, k):
        raise DimensionError(f"T must be {k}x{k}, got {T.shape}")
    dev = max(_orthonormality_defect(T), _orthonormality_defect(T.T))
    if dev > 1e-10:
        raise ValidationError(f"T is not orthonormal: ||T^T T - I||_F = {dev:.3e}")
    if np.array_equal(T, np.eye(k)):
        return model
    mix = lambda X: np.tensordot(T.T, X, 1)  # noqa: E731
    return model.with_blocks(mix(model.A), mix(model.B), mix(model.C), mix(model.D))


@dataclass(frozen=True, eq=False)
class ParameterProjection:
    """Orthonormal-column matrix ``T_r`` of shape ``(l+1, n_r)``."""

    T_r: np.ndarray
    method: str = "manual"
    objective: float | None = None
    seed: int | None = None

    def __post_init__(self):
        T = np.array(self.T_r, dtype=float)
        if T.ndim == 1:
            T = T[:, None]
        if T.ndim != 2 or not 1 <= T.shape[1] <= T.shape[0]:
            raise DimensionError(f"T_r must be (l+1) x n_r with 1 <= n_r <= l+1, got {T.shape}")
        dev = _orthonormality_defect(T)
        if dev > 1e-10:
            raise ValidationError(f"T_r columns are not orthonormal: ||T_r^T T_r - I||_F = {dev:.3e}")
        T.setflags(write=False)
        object.__setattr__(self, "T_r", T)

    @property
    def n_r(self) -> int:
        return self.T_r.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.T_r @ self.T_r.T

    @classmethod
    def from_columns(cls, columns: Sequence[int], n_params: int, **kw):
        """Projection onto the listed axes of the ``(l+1)`` chart (0 is the constant)."""
        T = np.eye(n_params + 1)[:, list(columns)]
        return cls(T, **kw)

    def to_dict(self):
        return {
            "n_r": self.n_r,
            "T_r": self.T_r.tolist(),
            "method": self.method,
            "objective": self.objective,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["T_r"], dtype=float), d.get("method", "manual"), d.get("objective"), d.get("seed"))


def apply_projection(model: AffineLpvModel, proj: ParameterProjection, center=None) -> AffineLpvModel:
    """Reduced-parameter model written as an affine model in the original theta.

    The blocks become ``(T_r T_r^T kron I) A^theta``. With ``center`` given,
    the projection acts on ``theta - center`` so that discarded directions are
    frozen at the center instead of at zero.
    """
    k = model.n_params + 1
    if proj.T_r.shape[0] != k:
        raise DimensionError(f"projection acts on {proj.T_r.shape[0]} coordinates, model has {k}")
    if proj.n_r > k:
        raise DimensionError(f"n_r = {proj.n_r} exceeds l+1 = {k}")
    work = model if center is None else model.shifted(center)
    Pi = proj.projector
    mix = lambda X: np.tensordot(Pi, X, 1)  # noqa: E731
    reduced = work.with_blocks(mix(work.A), mix(work.B), mix(work.C), mix(work.D))
    return reduced if center is None else reduced.shifted(-np.asarray(center, dtype=float))


def lti_difference(sys: LtiRealization, other: LtiRealization) -> LtiRealization:
    """``sys - other`` in the coordinates ``(x - x_other, x_other)`` (same state dimension)."""
    n = sys.n_states
    if other.n_states != n or sys.D.shape != other.D.shape:
        raise DimensionError("systems differ in state, input or output dimension")
    A = np.block([[sys.A, sys.A - other.A], [np.zeros((n, n)), other.A]])
    B = np.vstack([sys.B - other.B, other.B])
    C = np.hstack([sys.C, sys.C - other.C])
    return LtiRealization(A, B, C, sys.D - other.D, sys.dt)


def difference_system(model: AffineLpvModel, other: AffineLpvModel) -> AffineLpvModel:
    """Parallel interconnection with output ``y - y_other``; affine in theta.

    When both models have the same state dimension the realization is
    written in the coordinates ``(x - x_other, x_other)``:

        A = [[A, A - A_o], [0, A_o]],  B = [B - B_o; B_o],  C = [C, C - C_o]

    which is similar to the block-diagonal one but keeps the output exactly
    zero when the two models coincide (no cancellation in the Gramians).
    """
    if (model.n_params, model.n_inputs, model.n_outputs) != (other.n_params, other.n_inputs, other.n_outputs):
        raise DimensionError("models differ in parameter, input or output dimension")
    k, n, n2 = model.n_params + 1, model.n_states, other.n_states
    A = np.zeros((k, n + n2, n + n2))
    A[:, :n, :n] = model.A
    A[:, n:, n:] = other.A
    D = model.D - other.D
    if n == n2:
        A[:, :n, n:] = model.A - other.A
        B = np.concatenate([model.B - other.B, other.B], axis=1)
        C = np.concatenate([model.C, model.C - other.C], axis=2)
    else:
        B = np.concatenate([model.B, other.B], axis=1)
        C = np.concatenate([model.C, -other.C], axis=2)
    return AffineLpvModel(A, B, C, D, model.box, model.dt, model.original_box)


def error_system(model: AffineLpvModel, proj: ParameterProjection, center=None) -> AffineLpvModel:
    """``Sigma(theta) - Sigma_r(theta)`` as a 2n-state affine model."""
    return difference_system(model, apply_projection(model, proj, center))
