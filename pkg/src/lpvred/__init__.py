"""Parameter-space reduction of affine LPV models."""
from .core import (AffineLpvModel, LtiRealization, ParameterBox, ParameterProjection, apply_projection,
                   apply_transformation, difference_system, error_system, evaluate_at, sample, vertices)
from .errors import (CapacityError, ConfigurationError, DimensionError, DomainError, InfeasibleError, LpvError,
                     NumericalError, SolverError, StabilityError, ValidationError)
from .generators import generate_random_model, generate_thermal_model
from .gramians import (AffineGramian, affine_gramians, build_rate_bounded_lmis, build_static_lmis, solve_lmi,
                       verify_upper_bound)
from .hankel import (HankelObjectiveContext, OptimizerConfig, objective, optimize_projection,
                     subsystem_hankel_baseline)
from .norms import EvaluationSet, hankel_norm, hinf_norm, p_norm, relative_pinf_error
from .sensitivity import (CovarianceMatrix, ScmConfig, TscmConfig, build_sensitivity_realization,
                          covariance_to_projection, scm, time_sensitivity_matrices, transfer_function, tscm)
from .simulate import SimulationSpec, simulate, simulate_error
from .sweep import ReductionReport, SweepConfig, run_reduction_sweep

__version__ = "0.1.0"
