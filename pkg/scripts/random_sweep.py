"""Relative parametric error vs retained parameters on the seeded 45-state, 5-parameter random model."""
from _common import parse, run

from lpvred.generators import generate_random_model
from lpvred.simulate import SimulationSpec

if __name__ == "__main__":
    args = parse(__doc__, "results/random")
    model = generate_random_model(args.seed)
    # constant input on [0, 25], then free response
    spec = SimulationSpec(((tuple([1.0] * model.n_inputs), 25.0),), 50.0, theta_seed=args.seed)
    run(model, args, spec)
