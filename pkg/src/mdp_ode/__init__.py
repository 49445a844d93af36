"""Average-reward MDP families solved by value-function continuation.

Instead of solving one MDP, the library solves every member of a reward
family w_zeta = w0 + zeta * U at once: the relative value functions h_zeta
obey an ODE dh/dzeta = V(h) whose vector field is one Poisson solve under
the currently optimal transition matrix.  The concrete control class
penalizes deviation from a nominal kernel by relative entropy rate while an
exogenous "nature" factor stays untouched; twisted-kernel structure makes
both the field and the optimal policies explicit.  Closed-form benchmarks
(a three-state continuous-time generator model and the scalar
linear-quadratic coefficient ODE) validate the integrators end to end.
"""

from .errors import (
    ConvergenceError,
    DegeneracyError,
    FeasibilityError,
    InfiniteDivergenceError,
    IntegrationError,
    ModelError,
    ModelFormatError,
    ReducibilityError,
)
from .model import (
    ControlKernel,
    KLModel,
    NatureKernel,
    Pmf,
    StandardMDP,
    StateSpace,
    StochasticMatrix,
    assemble_p0,
    check_irreducible_aperiodic,
    embed_standard_mdp,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    support_equivalence,
)
from .markov import (
    FundamentalMatrix,
    GeneratorMatrix,
    PoissonSolution,
    discounted_solve,
    fundamental_matrix,
    generator_invariant,
    generator_poisson,
    invariant_pmf,
    poisson_solve,
)
from .kl import (
    FixedPointSolution,
    SolveDiagnostics,
    TwistResult,
    aroe_residual,
    brute_force_oracle,
    conditional_exponent,
    eta_from_value,
    evaluate_solution,
    fixed_point_residual,
    jacobian,
    kl_rate,
    log_mgf,
    newton_solve,
    reward_objective,
    twist,
)
from .ode import (
    GeneratorModel,
    IntegratorSettings,
    LqrModel,
    TrajectorySample,
    ValueTrajectory,
    brockett_policy,
    convexity_check,
    integrate_brockett,
    integrate_kl,
    lambda_derivative_check,
    lqr_coefficient_ode,
    riccati_oracle,
    vector_field_brockett,
    vector_field_kl,
)
from . import fixtures

__version__ = "0.1.0"

__all__ = [
    "ControlKernel",
    "ConvergenceError",
    "DegeneracyError",
    "FeasibilityError",
    "FixedPointSolution",
    "FundamentalMatrix",
    "GeneratorMatrix",
    "GeneratorModel",
    "InfiniteDivergenceError",
    "IntegrationError",
    "IntegratorSettings",
    "KLModel",
    "LqrModel",
    "ModelError",
    "ModelFormatError",
    "NatureKernel",
    "Pmf",
    "PoissonSolution",
    "ReducibilityError",
    "SolveDiagnostics",
    "StandardMDP",
    "StateSpace",
    "StochasticMatrix",
    "TrajectorySample",
    "TwistResult",
    "ValueTrajectory",
    "aroe_residual",
    "assemble_p0",
    "brockett_policy",
    "brute_force_oracle",
    "check_irreducible_aperiodic",
    "conditional_exponent",
    "convexity_check",
    "discounted_solve",
    "embed_standard_mdp",
    "eta_from_value",
    "evaluate_solution",
    "fixed_point_residual",
    "fixtures",
    "fundamental_matrix",
    "generator_invariant",
    "generator_poisson",
    "integrate_brockett",
    "integrate_kl",
    "invariant_pmf",
    "jacobian",
    "kl_rate",
    "lambda_derivative_check",
    "load_model",
    "log_mgf",
    "lqr_coefficient_ode",
    "model_from_dict",
    "model_to_dict",
    "newton_solve",
    "poisson_solve",
    "reward_objective",
    "riccati_oracle",
    "save_model",
    "support_equivalence",
    "twist",
    "vector_field_brockett",
    "vector_field_kl",
]
