"""Shared driver for the example sweeps."""
import argparse
import logging
import time
from pathlib import Path

from lpvred.gramians import affine_gramians
from lpvred.io import load_gramians, save_gramians, save_model
from lpvred.norms import EvaluationSet
from lpvred.sweep import SweepConfig, run_reduction_sweep


def parse(desc, default_out):
    p = argparse.ArgumentParser(description=desc)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--methods", nargs="+", default=["hankel", "tscm", "scm", "subsys"])
    p.add_argument("--out", default=default_out)
    return p.parse_args()


def run(model, args, simulation=None):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.json", model)
    gfile = out / "gramians.json"
    if gfile.exists():
        grams = load_gramians(gfile)
    else:
        t0 = time.perf_counter()
        grams = affine_gramians(model)
        save_gramians(gfile, *grams, {"seconds": time.perf_counter() - t0})
        print(f"Gramian synthesis: {time.perf_counter() - t0:.1f} s")
    es = EvaluationSet("vertices+samples", args.samples, args.seed)
    cfg = SweepConfig(methods=tuple(args.methods), seed=args.seed, eval_set=es, simulation=simulation)
    report = run_reduction_sweep(model, cfg, gramians=grams)
    report.write(out)
    for m in cfg.methods:
        print(m, {k: (None if v is None else float(f"{v:.4g}")) for k, v in report.errors(m).items()})
    return report
