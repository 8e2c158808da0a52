"""Parameter sensitivities of affine LPV models and the covariance matrices built from them.

Frequency domain: the derivative of ``H(theta, s) = D + C (sI - A)^{-1} B``
with respect to ``theta_i`` is realized by a ``4n``-state system, and the
transfer-sensitivity covariance matrix (TSCM) collects

    Pi_ij = max_{theta, w} sigma_max( dH_i(theta, jw)^H dH_j(theta, jw) ).

Time domain: after zero-order-hold discretization the Jacobian of the
stacked outputs ``y(0..K)`` with respect to ``theta_i`` is a block Toeplitz
matrix ``M^i`` of derivative Markov parameters; the sensitivity covariance
matrix (SCM) is ``S_ij = max_theta sigma_max(M^j^T M^i)``.

The leading singular directions of either matrix give a parameter
projection (:func:`covariance_to_projection`).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import AffineLpvModel, LtiRealization, ParameterProjection
from .errors import ConfigurationError, DimensionError, SingularityError, ValidationError
from .norms import DEFAULT_EVAL_SET, EvaluationSet, frequency_grid

log = logging.getLogger(__name__)

KINDS = ("TSCM", "SCM")


class SensitivityHorizonWarning(UserWarning):
    """The time horizon is shorter than the slowest time constant."""


def _coeffs(theta):
    return np.concatenate(([1.0], np.asarray(theta, dtype=float).reshape(-1)))


def _points(freq, model: AffineLpvModel):
    w = np.atleast_1d(np.asarray(freq, dtype=float))
    return np.exp(1j * w * model.dt) if model.is_discrete else 1j * w


# ---------------------------------------------------------------------------
# transfer functions and the Jacobian realization
# ---------------------------------------------------------------------------

def transfer_function(model: AffineLpvModel, theta, freq):
    """``H(theta)`` at ``s = jw`` (continuous) or ``z = e^{jwh}`` (discrete).

    ``freq`` may be a scalar (returns ``q x m``) or an array (returns
    ``(len, q, m)``).
    """
    model.box.check(theta)
    sys = model.combine(_coeffs(theta))
    lam = _points(freq, model)
    n = sys.n_states
    out = np.empty((lam.size,) + sys.D.shape, dtype=complex)
    for k, s in enumerate(lam):
        if n == 0:
            out[k] = sys.D
            continue
        M = s * np.eye(n) - sys.A
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(M, check_finite=False)
        if np.min(np.abs(np.diag(lu))) <= 1e-14 * max(np.abs(lu).max(), 1.0):
            raise SingularityError(f"{s} is (numerically) an eigenvalue of A(theta)")
        out[k] = sys.C @ sla.lu_solve((lu, piv), sys.B) + sys.D
    return out[0] if np.ndim(freq) == 0 else out


@dataclass(frozen=True, eq=False)
class SensitivityRealization:
    """``4n``-state realization of ``dH/dtheta_i``, affine in theta.

    States ``(x1, x2, x3, x4)``::

        A = [[A, 0, 0,   0],     B = [B;          C = [C_i, C, 0, C]
             [0, A, A_i, 0],          0;          D = D_i
             [0, 0, A,   0],          B;
             [0, 0, 0,   A]]          B_i]

    giving ``C_i R B + C R A_i R B + C R B_i + D_i`` with ``R = (sI - A)^{-1}``.
    """

    param_index: int
    system: AffineLpvModel

    @property
    def A(self):
        return self.system.A

    @property
    def B(self):
        return self.system.B

    @property
    def C(self):
        return self.system.C

    @property
    def D(self):
        return self.system.D

    def at(self, theta) -> LtiRealization:
        return self.system.at(theta)

    def transfer(self, theta, freq):
        return transfer_function(self.system, theta, freq)


def build_sensitivity_realization(model: AffineLpvModel, i: int) -> SensitivityRealization:
    """Jacobian realization for parameter ``i`` (1-based)."""
    l = model.n_params
    if not 1 <= i <= l:
        raise DimensionError(f"parameter index must lie in [1, {l}], got {i}")
    k, n, m, q = l + 1, model.n_states, model.n_inputs, model.n_outputs
    A = np.zeros((k, 4 * n, 4 * n))
    B = np.zeros((k, 4 * n, m))
    C = np.zeros((k, q, 4 * n))
    D = np.zeros((k, q, m))
    for j in range(4):
        A[:, j * n:(j + 1) * n, j * n:(j + 1) * n] = model.A
    A[0, n:2 * n, 2 * n:3 * n] = model.A[i]
    B[:, :n] = model.B
    B[:, 2 * n:3 * n] = model.B
    B[0, 3 * n:] = model.B[i]
    C[0, :, :n] = model.C[i]
    C[:, :, n:2 * n] = model.C
    C[:, :, 3 * n:] = model.C
    D[0] = model.D[i]
    sys = AffineLpvModel(A, B, C, D, model.box, model.dt, model.original_box)
    return SensitivityRealization(i, sys)


def sensitivity_responses(model: AffineLpvModel, theta, omegas, chunk=64) -> np.ndarray:
    """``dH/dtheta_i`` for all ``i`` at one theta, shape ``(l, len(w), q, m)``.

    Uses the resolvent directly: ``C_i X + Y A_i X + Y B_i + D_i`` with
    ``X = R B`` and ``Y = C R``.
    """
    c = _coeffs(theta)
    sys = model.combine(c)
    lam = _points(omegas, model)
    n, l = sys.n_states, model.n_params
    q, m = sys.D.shape
    out = np.empty((l, lam.size, q, m), dtype=complex)
    out[:] = model.D[1:, None]
    if n == 0:
        return out
    H, Z = sla.hessenberg(sys.A, calc_q=True)
    Bz, Cz = Z.T @ sys.B, sys.C @ Z
    Ai = np.einsum("ji,kjl,lm->kim", Z, model.A[1:], Z)
    Bi = np.einsum("ji,kjm->kim", Z, model.B[1:])
    Ci = model.C[1:] @ Z
    I = np.eye(n)
    for lo in range(0, lam.size, chunk):
        s = lam[lo:lo + chunk]
        M = s[:, None, None] * I - H
        X = np.linalg.solve(M, np.broadcast_to(Bz, (s.size,) + Bz.shape))
        Y = np.swapaxes(np.linalg.solve(np.swapaxes(M, 1, 2), np.broadcast_to(Cz.T, (s.size,) + Cz.T.shape)), 1, 2)
        for k in range(l):
            out[k, lo:lo + chunk] += Ci[k] @ X + Y @ Ai[k] @ X + Y @ Bi[k]
    return out


def adjoint_product_realization(model: AffineLpvModel, i: int, j: int, theta) -> LtiRealization:
    """Realization of ``dH_i~ dH_j`` with ``G~(s) = G(-s)^T``; equals ``dH_i^H dH_j`` on ``s = jw``.

    Not stable (it has the mirrored poles), so only frequency-grid
    evaluation applies.
    """
    if model.is_discrete:
        raise ConfigurationError("adjoint products are implemented for continuous-time models")
    Si = build_sensitivity_realization(model, i).at(theta)
    Sj = build_sensitivity_realization(model, j).at(theta)
    # adjoint of Si: (-A^T, C^T, -B^T, D^T)
    Aa, Ba, Ca, Da = -Si.A.T, Si.C.T, -Si.B.T, Si.D.T
    # series connection: u -> Sj -> adjoint(Si)
    na, nj = Aa.shape[0], Sj.A.shape[0]
    A = np.block([[Sj.A, np.zeros((nj, na))], [Ba @ Sj.C, Aa]])
    B = np.vstack([Sj.B, Ba @ Sj.D])
    C = np.hstack([Da @ Sj.C, Ca])
    D = Da @ Sj.D
    return LtiRealization(A, B, C, D)


# ---------------------------------------------------------------------------
# covariance matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric nonnegative ``l x l`` matrix of pairwise sensitivity norms."""

    kind: str
    entries: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        E = np.array(self.entries, dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise DimensionError(f"covariance must be square, got {E.shape}")
        if np.abs(E - E.T).max(initial=0.0) > 1e-10 * max(np.abs(E).max(initial=0.0), 1.0):
            raise ValidationError("covariance matrix is not symmetric")
        if (E < 0).any():
            raise ValidationError("covariance entries must be nonnegative")
        E.setflags(write=False)
        object.__setattr__(self, "entries", E)

    @property
    def n_params(self):
        return self.entries.shape[0]

    def to_dict(self):
        return {"kind": self.kind, "entries": self.entries.tolist(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], np.asarray(d["entries"], dtype=float), d.get("meta", {}))


@dataclass(frozen=True)
class TscmConfig:
    """Frequency grid and parameter evaluation set for the TSCM."""

    eval_set: EvaluationSet = DEFAULT_EVAL_SET
    w_min: float = 1e-3
    w_max: float = 1e3
    n_freq: int = 400
    include_dc: bool = True
    omegas: tuple | None = None

    def grid(self):
        if self.omegas is not None:
            return np.asarray(self.omegas, dtype=float)
        return frequency_grid(self.w_min, self.w_max, self.n_freq, self.include_dc)

    def to_dict(self):
        d = asdict(self)
        d["eval_set"] = self.eval_set.describe()
        return d


def _pair_norms(Hs):
    """``max_w sigma_max(H_i^H H_j)`` for all pairs, upper triangle mirrored."""
    l = Hs.shape[0]
    out = np.zeros((l, l))
    for i in range(l):
        for j in range(i, l):
            P = np.conj(np.swapaxes(Hs[i], 1, 2)) @ Hs[j]
            out[i, j] = np.linalg.svd(P, compute_uv=False)[:, 0].max() if P.size else 0.0
            out[j, i] = out[i, j]
    return out


def tscm(model: AffineLpvModel, config: TscmConfig | None = None) -> CovarianceMatrix:
    """Transfer-sensitivity covariance matrix, maximized over the evaluation set and frequency grid."""
    cfg = TscmConfig() if config is None else config
    model.require_stable()
    w = cfg.grid()
    pts = cfg.eval_set.points(model.box)
    Pi = np.zeros((model.n_params, model.n_params))
    for th in pts:
        Pi = np.maximum(Pi, _pair_norms(sensitivity_responses(model, th, w)))
    meta = {"config": cfg.to_dict(), "n_points": len(pts), "n_freq": int(w.size)}
    return CovarianceMatrix("TSCM", Pi, meta)


# ---------------------------------------------------------------------------
# time domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteSensitivityData:
    """Discrete-time matrices at one theta and their derivatives in each parameter."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dA: np.ndarray
    dB: np.ndarray
    dC: np.ndarray
    dD: np.ndarray
    dt: float


def zoh_with_derivatives(model: AffineLpvModel, theta, h=None) -> DiscreteSensitivityData:
    """Zero-order-hold discretization with exact derivatives in every parameter.

    ``[[Ad, Bd], [0, I]] = expm(h [[A, B], [0, 0]])``; the derivatives are
    Frechet derivatives of the same exponential in the direction of
    ``[[A_i, B_i], [0, 0]]``. A discrete model is passed through unchanged
    (its derivatives are the blocks themselves).
    """
    c = _coeffs(theta)
    sys = model.combine(c)
    n, m = sys.B.shape
    if model.is_discrete:
        return DiscreteSensitivityData(sys.A, sys.B, sys.C, sys.D, model.A[1:], model.B[1:], model.C[1:],
                                       model.D[1:], model.dt)
    if h is None or not h > 0:
        raise ConfigurationError("a positive step h is needed to discretize a continuous model")
    M = np.zeros((n + m, n + m))
    M[:n, :n] = sys.A
    M[:n, n:] = sys.B
    l = model.n_params
    dA = np.zeros((l, n, n))
    dB = np.zeros((l, n, m))
    E = None
    for i in range(l):
        Ei = np.zeros_like(M)
        Ei[:n, :n] = model.A[i + 1]
        Ei[:n, n:] = model.B[i + 1]
        E, L = sla.expm_frechet(h * M, h * Ei)
        dA[i], dB[i] = L[:n, :n], L[:n, n:]
    if E is None:
        E = sla.expm(h * M)
    return DiscreteSensitivityData(E[:n, :n], E[:n, n:], sys.C, sys.D, dA, dB, model.C[1:], model.D[1:], h)


def discretize(model: AffineLpvModel, theta, h) -> LtiRealization:
    """Zero-order-hold discretization of ``model(theta)``."""
    d = zoh_with_derivatives(model, theta, h)
    return LtiRealization(d.A, d.B, d.C, d.D, d.dt)


def output_evolution(sys: LtiRealization, x0, inputs) -> np.ndarray:
    """Outputs ``y(0..K)`` of a discrete system from the Markov-parameter expansion.

    ``y(k) = C A^k x0 + sum_{i=1..k} C A^{i-1} B u(k-i) + D u(k)``.
    ``inputs`` has shape ``(K+1, m)``; returns ``(K+1, q)``.
    """
    U = np.atleast_2d(np.asarray(inputs, dtype=float))
    K = U.shape[0] - 1
    x0 = np.zeros(sys.n_states) if x0 is None else np.asarray(x0, dtype=float)
    O, T = _stacked_maps(sys.A, sys.B, sys.C, sys.D, K)
    y = O @ x0 + T @ U.reshape(-1)
    return y.reshape(K + 1, -1)


def _markov(A, B, C, D, K):
    """``h_0 = D``, ``h_j = C A^{j-1} B``, ``j = 1..K``."""
    h = [D]
    X = B
    for _ in range(K):
        h.append(C @ X)
        X = A @ X
    return h


def _toeplitz(h, q, m):
    """Lower block-Toeplitz matrix with block ``(k, j) = h[k - j]``."""
    K = len(h) - 1
    H = np.concatenate([np.asarray(h).reshape(K + 1, q, m), np.zeros((1, q, m))])
    k, j = np.indices((K + 1, K + 1))
    idx = np.where(k >= j, k - j, K + 1)
    return H[idx].transpose(0, 2, 1, 3).reshape((K + 1) * q, (K + 1) * m)


def _spectral_norm(X):
    """Largest singular value.

    Small matrices use a dense SVD. Larger ones take the top eigenvalue of
    the smaller Gram matrix; its absolute error is ``O(eps sigma_max^2)``,
    so ``sigma_max`` keeps full relative accuracy. Lanczos (svds) stalls on
    the clustered leading singular values of block-Toeplitz products.
    """
    if min(X.shape) == 0:
        return 0.0
    if min(X.shape) < 64:
        return float(np.linalg.norm(X, 2))
    G = X.T @ X if X.shape[1] <= X.shape[0] else X @ X.T
    k = G.shape[0]
    lam = sla.eigvalsh(G, subset_by_index=[k - 1, k - 1], check_finite=False)
    return float(np.sqrt(max(lam[0], 0.0)))


def _stacked_maps(A, B, C, D, K):
    q, m = D.shape
    n = A.shape[0]
    O = np.zeros(((K + 1) * q, n))
    Z = np.eye(n)
    for k in range(K + 1):
        O[k * q:(k + 1) * q] = C @ Z
        Z = A @ Z
    return O, _toeplitz(_markov(A, B, C, D, K), q, m)


def _derivative_maps(d: DiscreteSensitivityData, i, K):
    """Stacked ``d/dtheta_i`` of the initial-state map and the input Toeplitz map."""
    A, B, C, D = d.A, d.B, d.C, d.D
    Ai, Bi, Ci, Di = d.dA[i], d.dB[i], d.dC[i], d.dD[i]
    q, m = D.shape
    n = A.shape[0]
    # derivative Markov parameters: X_j = A^{j-1} B, dX_{j+1} = A_i X_j + A dX_j
    h = [Di]
    X, dX = B, Bi
    for _ in range(K):
        h.append(Ci @ X + C @ dX)
        X, dX = A @ X, Ai @ X + A @ dX
    # initial-state part: d(C A^k) = C_i A^k + C d(A^k)
    dO = np.zeros(((K + 1) * q, n))
    Z, dZ = np.eye(n), np.zeros((n, n))
    for k in range(K + 1):
        dO[k * q:(k + 1) * q] = Ci @ Z + C @ dZ
        Z, dZ = A @ Z, Ai @ Z + A @ dZ
    return dO, _toeplitz(h, q, m)


def slowest_time_constant(model: AffineLpvModel, points=None) -> float:
    """Largest ``1 / |Re(lambda)|`` (continuous, seconds) or ``-1 / ln|lambda|`` (discrete, samples)."""
    pts = model.stability_points() if points is None else points
    tau = 0.0
    for th in pts:
        p = model.combine(_coeffs(th)).poles()
        if p.size == 0:
            continue
        if model.is_discrete:
            r = np.abs(p).max()
            tau = max(tau, np.inf if r >= 1 else (-1.0 / np.log(r) if r > 0 else 0.0))
        else:
            a = np.abs(p.real).min()
            tau = max(tau, np.inf if a == 0 else 1.0 / a)
    return tau


def time_sensitivity_matrices(model: AffineLpvModel, theta, k_max: int, h=None, include_x0=False,
                              data: DiscreteSensitivityData | None = None) -> list[np.ndarray]:
    """Jacobians ``M^i`` of the stacked outputs ``y(0..k_max)`` with respect to ``theta_i``.

    ``M^i`` maps the stacked inputs ``U = [u(0); ...; u(k_max)]`` to
    ``dY/dtheta_i``. With ``include_x0`` the ``n`` columns of
    ``d(C A^k)/dtheta_i`` are prepended so that ``M^i [x0; U]`` is the full
    sensitivity. Continuous models are discretized with step ``h``.
    """
    if k_max < 1:
        raise ConfigurationError("k_max must be at least 1")
    d = zoh_with_derivatives(model, theta, h) if data is None else data
    r = np.abs(np.linalg.eigvals(d.A)).max() if d.A.size else 0.0
    tau = -1.0 / np.log(r) if 0 < r < 1 else (np.inf if r >= 1 else 0.0)
    if k_max < tau:
        warnings.warn(f"k_max={k_max} is shorter than the slowest time constant ({tau:.1f} samples)",
                      SensitivityHorizonWarning, stacklevel=2)
    out = []
    for i in range(model.n_params):
        dO, dT = _derivative_maps(d, i, k_max)
        out.append(np.hstack([dO, dT]) if include_x0 else dT)
    return out


@dataclass(frozen=True)
class ScmConfig:
    """Step, horizon and evaluation set for the SCM.

    ``h`` defaults to the slowest time constant over ``steps_per_tau``;
    ``k_max`` to ``horizon_factor`` slowest time constants in samples.
    """

    h: float | None = None
    k_max: int | None = None
    steps_per_tau: int = 50
    horizon_factor: float = 5.0
    eval_set: EvaluationSet = DEFAULT_EVAL_SET
    include_x0: bool = False

    def resolve(self, model: AffineLpvModel):
        """Return ``(h, k_max)`` for ``model``."""
        tau = slowest_time_constant(model)
        if not np.isfinite(tau) or tau <= 0:
            raise ConfigurationError("cannot derive a time scale: model has no finite slowest mode")
        if model.is_discrete:
            h = model.dt
            tau_samples = tau
        else:
            h = self.h if self.h is not None else tau / self.steps_per_tau
            tau_samples = tau / h
        k_max = self.k_max if self.k_max is not None else int(np.ceil(self.horizon_factor * tau_samples))
        return float(h), int(k_max)

    def to_dict(self):
        d = asdict(self)
        d["eval_set"] = self.eval_set.describe()
        return d


def scm(model: AffineLpvModel, config: ScmConfig | None = None) -> CovarianceMatrix:
    """Sensitivity covariance matrix ``max_theta sigma_max(M^j^T M^i)``."""
    cfg = ScmConfig() if config is None else config
    model.require_stable()
    h, k_max = cfg.resolve(model)
    pts = cfg.eval_set.points(model.box)
    l = model.n_params
    S = np.zeros((l, l))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SensitivityHorizonWarning)
        for th in pts:
            Ms = time_sensitivity_matrices(model, th, k_max, h, cfg.include_x0)
            for i in range(l):
                for j in range(i, l):
                    v = _spectral_norm(Ms[j].T @ Ms[i])
                    S[i, j] = max(S[i, j], v)
                    S[j, i] = S[i, j]
    meta = {"config": cfg.to_dict(), "h": h, "k_max": k_max, "n_points": len(pts)}
    log.info("SCM: h=%.4g, k_max=%d, %d parameter points", h, k_max, len(pts))
    return CovarianceMatrix("SCM", S, meta)


# ---------------------------------------------------------------------------
# projection from a covariance matrix
# ---------------------------------------------------------------------------

def _ordered_directions(E, rel_tol=1e-12):
    """Singular directions by decreasing singular value with a deterministic basis for ties.

    Within a group of (numerically) equal singular values the basis is built
    by projecting the coordinate axes onto the group's subspace in index
    order, so ties resolve toward the lowest index. Each vector is signed so
    its largest-magnitude entry (first one on ties) is positive.
    """
    l = E.shape[0]
    U, s, _ = np.linalg.svd(E)
    scale = max(s.max(initial=0.0), np.finfo(float).tiny)
    cols, vals = [], []
    a = 0
    while a < l:
        b = a + 1
        while b < l and s[a] - s[b] <= rel_tol * scale:
            b += 1
        Ug = U[:, a:b]
        chosen = np.zeros((l, 0))
        for j in range(l):
            if chosen.shape[1] == b - a:
                break
            v = Ug @ Ug[j]
            v -= chosen @ (chosen.T @ v)
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                chosen = np.hstack([chosen, (v / nv)[:, None]])
        for c in chosen.T:
            k = int(np.argmax(np.abs(c) > np.abs(c).max() * (1 - 1e-12)))
            cols.append(c if c[k] > 0 else -c)
            vals.append(s[a])
        a = b
    return np.array(cols).T.reshape(l, -1), np.array(vals)


def covariance_to_projection(cov: CovarianceMatrix, n_r: int, include_constant=True) -> ParameterProjection:
    """Projection onto the leading singular directions of ``cov``, lifted to the ``(l+1)`` chart.

    ``n_r`` is the number of columns of ``T_r``; with ``include_constant``
    the first column is ``e_0`` and the other ``n_r - 1`` are the leading
    directions.
    """
    l = cov.n_params
    lo, hi = (1, l + 1) if include_constant else (1, l)
    if not lo <= n_r <= hi:
        raise DimensionError(f"n_r must lie in [{lo}, {hi}], got {n_r}")
    dirs, _ = _ordered_directions(cov.entries)
    n_dir = n_r - 1 if include_constant else n_r
    T = np.zeros((l + 1, n_r))
    off = 0
    if include_constant:
        T[0, 0] = 1.0
        off = 1
    T[1:, off:] = dirs[:, :n_dir]
    return ParameterProjection(T, cov.kind.lower())
