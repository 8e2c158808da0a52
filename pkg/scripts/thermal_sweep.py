"""Relative parametric error vs retained parameters on the five-block thermal network."""
from _common import parse, run

from lpvred.generators import generate_thermal_model
from lpvred.simulate import SimulationSpec

if __name__ == "__main__":
    args = parse(__doc__, "results/thermal")
    model = generate_thermal_model(args.seed)
    spec = SimulationSpec((((50.0, 45.0), 250.0),), 500.0, theta_seed=args.seed)
    rep = run(model, args, spec)
    worst = {m: max(rep.errors(m), key=lambda k: rep.errors(m)[k] or 0) for m in args.methods}
    print("n_r with the largest error per method:", worst)
