"""Reduction sweep over methods and retained parameter counts.

``n_r`` in a sweep counts *retained parameters*: the projection keeps the
constant direction plus ``n_r`` further directions, so ``T_r`` has
``n_r + 1`` columns. ``n_r = 0`` is the constant-only (nominal) model and
``n_r = l`` is lossless. Projections act in the centered chart, so a
dropped direction is frozen at the box center.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import AffineLpvModel, ParameterProjection, apply_projection
from .errors import ConfigurationError, DimensionError
from .gramians import AffineGramian, affine_gramians
from .hankel import HankelObjectiveContext, OptimizerConfig, optimize_projection, subsystem_hankel_baseline
from .io import dumps, write_json
from .norms import DEFAULT_EVAL_SET, EvaluationSet, _workers, p_norm, relative_pinf_error
from .sensitivity import CovarianceMatrix, ScmConfig, TscmConfig, covariance_to_projection, scm, tscm
from .simulate import SimulationSpec, simulate_error

log = logging.getLogger(__name__)

METHODS = ("hankel", "tscm", "scm", "subsys")
NOTES = {
    "objective": "worst-vertex spectral norm of the Gramian-product mismatch (sigma_max)",
    "subsys_score": "Hankel norm of Sigma(center + (upper_i - center_i) e_i) - Sigma(center)",
    "n_r": "retained parameters; T_r has n_r + 1 columns including the constant direction",
    "chart": "projections act on theta - box center",
}


def model_hash(model: AffineLpvModel) -> str:
    return hashlib.sha256(dumps(model.to_dict()).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SweepConfig:
    """Methods, retained counts and the settings every cell shares.

    ``n_r=None`` sweeps ``0..l``. ``simulation=None`` uses a unit input on
    the first half of ten slowest time constants at a random theta drawn
    with ``seed``.
    """

    methods: tuple = METHODS
    n_r: tuple | None = None
    seed: int = 0
    eval_set: EvaluationSet = DEFAULT_EVAL_SET
    which: str = "hinf"
    rel_tol: float = 1e-4
    optimizer: OptimizerConfig = OptimizerConfig()
    tscm: TscmConfig = TscmConfig()
    scm: ScmConfig = ScmConfig()
    nested: bool = True
    warm_start: bool = True
    simulate: bool = True
    simulation: SimulationSpec | None = None
    rate_bounded: bool = False
    workers: int | None = None

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigurationError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if self.n_r is not None:
            object.__setattr__(self, "n_r", tuple(sorted(set(int(k) for k in self.n_r))))

    def counts(self, l):
        ks = tuple(range(l + 1)) if self.n_r is None else self.n_r
        if any(not 0 <= k <= l for k in ks):
            raise DimensionError(f"retained counts must lie in [0, {l}], got {ks}")
        return ks

    def to_dict(self):
        return {
            "methods": list(self.methods),
            "n_r": None if self.n_r is None else list(self.n_r),
            "seed": self.seed,
            "eval_set": self.eval_set.describe(),
            "which": self.which,
            "rel_tol": self.rel_tol,
            "optimizer": self.optimizer.to_dict(),
            "tscm": self.tscm.to_dict(),
            "scm": self.scm.to_dict(),
            "nested": self.nested,
            "warm_start": self.warm_start,
            "simulate": self.simulate,
            "simulation": None if self.simulation is None else self.simulation.to_dict(),
            "rate_bounded": self.rate_bounded,
        }


@dataclass
class SweepCell:
    method: str
    n_r: int
    status: str = "ok"
    relative_error: float | None = None
    objective: float | None = None
    projection: ParameterProjection | None = None
    simulation: dict | None = None
    error: str | None = None
    seconds: float = 0.0
    traces: tuple | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "method": self.method,
            "n_r": self.n_r,
            "status": self.status,
            "relative_error": self.relative_error,
            "objective": self.objective,
            "T_r": None if self.projection is None else self.projection.T_r.tolist(),
            "simulation": self.simulation,
            "error": self.error,
        }


@dataclass
class ReductionReport:
    model: dict
    config: dict
    reference: dict
    cells: list
    covariances: dict = field(default_factory=dict)
    gramians: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def cell(self, method, n_r) -> SweepCell:
        for c in self.cells:
            if c.method == method and c.n_r == n_r:
                return c
        raise KeyError((method, n_r))

    def errors(self, method) -> dict:
        return {c.n_r: c.relative_error for c in self.cells if c.method == method}

    def nonincreasing(self, method, key="relative_error", tol=1e-10) -> bool:
        vals = [getattr(c, key) for c in sorted((c for c in self.cells if c.method == method), key=lambda c: c.n_r)]
        vals = [v for v in vals if v is not None]
        return all(b <= a * (1 + tol) + tol for a, b in zip(vals, vals[1:]))

    def to_dict(self, timings=True):
        d = {
            "model": self.model,
            "config": self.config,
            "reference": self.reference,
            "notes": NOTES,
            "covariances": self.covariances,
            "gramians": self.gramians,
            "cells": [c.to_dict() for c in self.cells],
            "nonincreasing": {m: self.nonincreasing(m) for m in self.config["methods"]},
        }
        if timings:
            d["timings"] = {**self.timings, "cells": {f"{c.method}:{c.n_r}": c.seconds for c in self.cells}}
        return d

    def write(self, out_dir, report_name="report.json"):
        """JSON report plus ``pinf_error.csv``, ``objective.csv`` and one simulation CSV per cell."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / report_name, self.to_dict())
        methods = self.config["methods"]
        counts = sorted({c.n_r for c in self.cells})
        for name, key in (("pinf_error.csv", "relative_error"), ("objective.csv", "objective")):
            with open(out / name, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["n_r", *methods])
                for k in counts:
                    row = []
                    for m in methods:
                        v = getattr(self.cell(m, k), key)
                        row.append("" if v is None else f"{v:.12g}")
                    w.writerow([k, *row])
        for c in self.cells:
            if c.traces is not None:
                full, _, e = c.traces
                full.to_csv(out / f"sim_{c.method}_nr{c.n_r}.csv", error=e)
        return out


def default_simulation(model: AffineLpvModel, seed=0) -> SimulationSpec:
    from .sensitivity import slowest_time_constant

    tau = slowest_time_constant(model)
    t_final = 10.0 * tau if np.isfinite(tau) and tau > 0 else 10.0
    return SimulationSpec(((tuple(np.ones(model.n_inputs)), 0.5 * t_final),), t_final, theta_seed=seed)


def _run_cell(model, method, k, proj_fn, ctx, ref, cfg, sim_spec, workers):
    cell = SweepCell(method, k)
    t0 = time.perf_counter()
    try:
        proj = proj_fn()
        cell.projection = proj
        reduced = apply_projection(model, proj, model.box.center)
        if ctx is not None:
            cell.objective = float(ctx.value(proj.T_r))
        cell.relative_error = float(relative_pinf_error(model, reduced, cfg.eval_set, cfg.which, cfg.rel_tol,
                                                        workers, reference=ref))
        if sim_spec is not None:
            full, red, e = simulate_error(model, reduced, sim_spec)
            cell.traces = (full, red, e)
            cell.simulation = {
                "theta": full.theta.tolist(),
                "max_abs_error": float(np.abs(e).max()),
                "max_abs_output": float(np.abs(full.y).max()),
            }
    except Exception as exc:  # noqa: BLE001 - a failed cell is recorded, the sweep goes on
        cell.status = "failed"
        cell.error = f"{type(exc).__name__}: {exc}"
        log.warning("cell %s n_r=%d failed: %s", method, k, cell.error)
    cell.seconds = time.perf_counter() - t0
    return cell


def run_reduction_sweep(model: AffineLpvModel, config: SweepConfig | None = None,
                        gramians: tuple[AffineGramian, AffineGramian] | None = None,
                        covariances: dict | None = None) -> ReductionReport:
    """Projection, reduced model, relative parametric error and simulation trace per (method, n_r).

    Precomputed ``gramians`` (P, Q) and ``covariances`` (``{"tscm": ..., "scm": ...}``)
    are used instead of recomputing them.
    """
    cfg = SweepConfig() if config is None else config
    l = model.n_params
    counts = cfg.counts(l)
    workers = _workers(cfg.workers)
    timings = {}
    center = model.box.center

    t0 = time.perf_counter()
    ref = p_norm(model, cfg.which, cfg.eval_set, cfg.rel_tol, workers)
    timings["reference"] = time.perf_counter() - t0

    # covariances (needed by their own methods and as Hankel warm starts)
    covs: dict[str, CovarianceMatrix | Exception] = dict(covariances or {})
    want = [m for m in ("tscm", "scm") if m in cfg.methods or ("hankel" in cfg.methods and cfg.warm_start)]
    for m in want:
        if m in covs:
            continue
        t0 = time.perf_counter()
        try:
            covs[m] = tscm(model, cfg.tscm) if m == "tscm" else scm(model, cfg.scm)
        except Exception as exc:  # noqa: BLE001
            covs[m] = exc
            log.warning("%s covariance failed: %s", m, exc)
        timings[m] = time.perf_counter() - t0

    ctx, gram_info = None, {}
    if "hankel" in cfg.methods or gramians is not None:
        t0 = time.perf_counter()
        try:
            gP, gQ = gramians if gramians is not None else affine_gramians(model, rate_bounded=cfg.rate_bounded)
            ctx = HankelObjectiveContext.from_model(model, gP, gQ, verify=True, center=center)
            gram_info = {g.kind: {"margin": g.margin, "objective": g.objective, "status": g.status}
                         for g in (gP, gQ)}
        except Exception as exc:  # noqa: BLE001
            ctx = exc
            gram_info = {"error": f"{type(exc).__name__}: {exc}"}
        timings["gramians"] = time.perf_counter() - t0
    hctx = ctx if isinstance(ctx, HankelObjectiveContext) else None

    sim_spec = None
    if cfg.simulate:
        sim_spec = cfg.simulation or default_simulation(model, cfg.seed)

    def raise_(exc):
        raise exc

    def cov_proj(m, k):
        c = covs[m]
        if isinstance(c, Exception):
            raise c
        return covariance_to_projection(c, k + 1)

    tasks = []
    for m in cfg.methods:
        if m == "hankel":
            continue
        for k in counts:
            if m == "subsys":
                fn = (lambda k=k: subsystem_hankel_baseline(model, k + 1, center))
            else:
                fn = (lambda m=m, k=k: cov_proj(m, k))
            tasks.append((m, k, fn))

    inner = 1 if workers > 1 else workers

    def hankel_chain():
        cells, prev = [], None
        ocfg = replace(cfg.optimizer, seed=cfg.seed, workers=inner)
        for k in counts:
            def fn(k=k, prev=prev):
                if ctx is not None and not isinstance(ctx, HankelObjectiveContext):
                    raise_(ctx)
                warm = []
                if cfg.warm_start:
                    for m in ("tscm", "scm"):
                        if isinstance(covs.get(m), CovarianceMatrix):
                            warm.append(covariance_to_projection(covs[m], k + 1).T_r)
                nested = prev if (cfg.nested and prev is not None and prev.n_r < k + 1) else None
                return optimize_projection(ctx, k + 1, ocfg, warm_starts=warm, nested=nested)
            cell = _run_cell(model, "hankel", k, fn, hctx, ref.value, cfg, sim_spec, inner)
            prev = cell.projection if cell.status == "ok" else prev
            cells.append(cell)
        return cells

    jobs = [lambda t=t: [_run_cell(model, t[0], t[1], t[2], hctx, ref.value, cfg, sim_spec, inner)]
            for t in tasks]
    if "hankel" in cfg.methods:
        jobs.append(hankel_chain)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda j: j(), jobs))
    else:
        results = [j() for j in jobs]
    # deterministic merge: methods in config order, counts ascending
    by_key = {(c.method, c.n_r): c for r in results for c in r}
    cells = [by_key[(m, k)] for m in cfg.methods for k in counts]

    cov_out = {}
    for m, c in covs.items():
        cov_out[m] = c.to_dict() if isinstance(c, CovarianceMatrix) else {"error": f"{type(c).__name__}: {c}"}
    report = ReductionReport(
        model={"n": model.n_states, "m": model.n_inputs, "q": model.n_outputs, "l": l, "hash": model_hash(model)},
        config=cfg.to_dict(),
        reference=ref.to_dict(),
        cells=cells,
        covariances=cov_out,
        gramians=gram_info,
        timings=timings,
    )
    return report


__all__ = ["ReductionReport", "SweepCell", "SweepConfig", "default_simulation", "model_hash",
           "run_reduction_sweep"]
