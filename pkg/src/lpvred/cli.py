"""Command line interface.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 infeasible LMI. ``LPVRED_WORKERS`` sets the worker count.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .core import apply_projection
from .errors import InfeasibleError, LpvError, NumericalError
from .generators import generate_random_model, generate_thermal_model
from .gramians import affine_gramians
from .hankel import HankelObjectiveContext, OptimizerConfig, optimize_projection, subsystem_hankel_baseline
from .io import (dumps, load_covariance, load_gramians, load_model, load_projection, read_json, save_covariance,
                 save_gramians, save_model, save_projection, write_json)
from .norms import EvaluationSet, p_norm
from .sensitivity import covariance_to_projection, scm, tscm
from .simulate import SimulationSpec, simulate
from .sweep import METHODS, SweepConfig, run_reduction_sweep

log = logging.getLogger("lpvred")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _counts(text):
    """``"0..5"``, ``"1,3"`` or ``"2"``."""
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out += list(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _eval_set(args):
    return EvaluationSet("vertices+samples", args.samples, args.seed)


def cmd_gen(args):
    if args.kind == "random":
        kw = {k: v for k, v in (("n", args.n), ("l", args.l), ("m", args.m), ("q", args.q)) if v is not None}
        model = generate_random_model(args.seed, **kw)
    else:
        kw = {k: v for k, v in (("blocks", args.blocks), ("nodes_per_block", args.nodes)) if v is not None}
        model = generate_thermal_model(args.seed, **kw)
    save_model(args.out, model)
    print(f"wrote {args.kind} model n={model.n_states} l={model.n_params} to {args.out}")


def cmd_gramians(args):
    model = load_model(args.model)
    objective = "trace_min" if args.trace_min else "feasibility"
    gP, gQ = affine_gramians(model, rate_bounded=args.rate_bounded, objective=objective)
    save_gramians(args.out, gP, gQ, {"rate_bounded": args.rate_bounded, "objective": objective})
    print(f"wrote Gramian bounds to {args.out} (margins P {gP.margin:.3g}, Q {gQ.margin:.3g})")


def cmd_reduce(args):
    model = load_model(args.model)
    cols = args.nr + 1
    center = model.box.center
    if args.method == "subsys":
        proj = subsystem_hankel_baseline(model, cols, center)
    elif args.method in ("tscm", "scm"):
        cov = load_covariance(args.covariance) if args.covariance else (tscm if args.method == "tscm" else scm)(model)
        if args.save_covariance:
            save_covariance(args.save_covariance, cov)
        proj = covariance_to_projection(cov, cols)
    else:
        gP, gQ = load_gramians(args.gramians) if args.gramians else affine_gramians(model)
        ctx = HankelObjectiveContext.from_model(model, gP, gQ, center=center)
        proj = optimize_projection(ctx, cols, OptimizerConfig(seed=args.seed))
    proj = type(proj)(proj.T_r, proj.method, proj.objective, args.seed)
    save_projection(args.out, proj, {"retained": args.nr, "center": center.tolist()})
    if args.reduced_model:
        save_model(args.reduced_model, apply_projection(model, proj, center))
    print(f"wrote {args.method} projection ({cols} columns) to {args.out}")


def cmd_eval(args):
    model = load_model(args.model)
    which = "hankel" if args.norm == "pinf-hankel" else "hinf"
    es = _eval_set(args)
    full = p_norm(model, which, es)
    out = {"norm": args.norm, "value": full.value, "argmax_theta": full.argmax_theta.tolist(),
           "evaluation_set": es.describe()}
    if args.projection:
        from .core import difference_system

        reduced = apply_projection(model, load_projection(args.projection), model.box.center)
        err = p_norm(difference_system(model, reduced), which, es)
        out["error"] = err.value
        out["relative_error"] = err.value / full.value
    text = dumps(out)
    if args.out:
        write_json(args.out, out)
    print(text)


def cmd_simulate(args):
    model = load_model(args.model)
    spec = SimulationSpec.from_dict(read_json(args.spec))
    if args.projection:
        from .simulate import simulate_error

        reduced = apply_projection(model, load_projection(args.projection), model.box.center)
        full, _, e = simulate_error(model, reduced, spec)
        full.to_csv(args.csv, error=e)
    else:
        full = simulate(model, spec)
        full.to_csv(args.csv)
    print(f"wrote {len(full.t)} samples at theta={np.round(full.theta, 6).tolist()} to {args.csv}")


def cmd_sweep(args):
    model = load_model(args.model)
    methods = tuple(args.methods)
    cfg = SweepConfig(methods=methods, n_r=tuple(_counts(args.nr)) if args.nr else None, seed=args.seed,
                      eval_set=_eval_set(args), optimizer=OptimizerConfig(seed=args.seed))
    grams = load_gramians(args.gramians) if args.gramians else None
    report = run_reduction_sweep(model, cfg, gramians=grams)
    if args.out_dir:
        report.write(args.out_dir)
    write_json(args.report, report.to_dict())
    for m in methods:
        errs = ", ".join(f"{k}: {v:.3e}" if v is not None else f"{k}: failed" for k, v in report.errors(m).items())
        print(f"{m:7s} {errs}")
    failed = [c for c in report.cells if c.status != "ok"]
    if failed:
        print(f"{len(failed)} cell(s) failed; see {args.report}", file=sys.stderr)


def build_parser():
    p = _Parser(prog="lpvred", description="Parameter-space reduction of affine LPV models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a seeded example model")
    g.add_argument("kind", choices=("random", "thermal"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--l", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--q", type=int)
    g.add_argument("--blocks", type=int)
    g.add_argument("--nodes", type=int, help="nodes per block (thermal)")
    g.set_defaults(func=cmd_gen)

    g = sub.add_parser("gramians", help="synthesize affine upper-bound Gramians")
    g.add_argument("model")
    g.add_argument("--rate-bounded", action="store_true")
    g.add_argument("--trace-min", action="store_true", help="minimize the block traces (default: feasibility)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gramians)

    g = sub.add_parser("reduce", help="compute a parameter projection")
    g.add_argument("model")
    g.add_argument("--method", choices=METHODS, required=True)
    g.add_argument("--nr", type=int, required=True, help="retained parameters (0 = constant only)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gramians", help="precomputed Gramian file (hankel)")
    g.add_argument("--covariance", help="precomputed covariance file (tscm/scm)")
    g.add_argument("--save-covariance")
    g.add_argument("--reduced-model", help="also write the reduced model")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_reduce)

    g = sub.add_parser("eval", help="parametric norm of a model or of a reduction error")
    g.add_argument("model")
    g.add_argument("--norm", choices=("pinf-hankel", "pinf-hinf"), default="pinf-hinf")
    g.add_argument("--samples", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--projection", help="evaluate the error of this projection")
    g.add_argument("--out")
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("simulate", help="simulate at one parameter value")
    g.add_argument("model")
    g.add_argument("--spec", required=True)
    g.add_argument("--csv", required=True)
    g.add_argument("--projection", help="also simulate the reduced model and write e = y - y_r")
    g.set_defaults(func=cmd_simulate)

    g = sub.add_parser("sweep", help="reduction sweep over methods and n_r")
    g.add_argument("model")
    g.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    g.add_argument("--nr", help="retained counts, e.g. 0..5 or 1,3 (default 0..l)")
    g.add_argument("--samples", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gramians")
    g.add_argument("--report", required=True)
    g.add_argument("--out-dir", help="also write CSVs here")
    g.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (LpvError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
