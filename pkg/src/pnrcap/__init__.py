"""Capacity of the lossy optical channel with photon-number-resolving detection.

The package computes information rates for Fock-state and coherent-state
input ensembles under a mean-photon constraint: a constrained
Blahut-Arimoto solver for discrete channels, a mass-point solver for the
continuous-input Poisson channel, quadrature evaluation of the
negative-binomial lower-bound rate, and the usual closed-form baselines.
"""

from .analytic import (
    ExponentialIntensity,
    PriorDistribution,
    binary_entropy,
    bowen_asymptotic,
    classical_capacity,
    gaussian_coherent_reference,
    gordon_asymptotic,
    heterodyne_capacity,
    holevo_g,
    homodyne_capacity,
    thermal_prior,
)
from .ba import (
    BAState,
    CapacityResult,
    ConstraintSpec,
    SolverConfig,
    ba_solve,
    fock_capacity,
    mutual_information,
    phi_update,
    prior_update,
    solve_multiplier,
)
from .channels import (
    ChannelMatrix,
    binomial_conditional,
    build_fock_channel,
    build_poisson_channel,
    mixture_identity_check,
    poisson_conditional,
)
from .experiments import (
    LimitRecord,
    PriorProfile,
    SweepGrid,
    SweepRecord,
    capacity_ratio_grid,
    poisson_limit_study,
    prior_profile,
    run_sweep,
    scaled_fock_spot_check,
)
from .negbin import (
    NegBinParams,
    OutputNegBin,
    QuadratureError,
    binomial_entropy,
    negbin_best_rate,
    negbin_conditional_entropy,
    negbin_entropy,
    negbin_mutual_info,
    negbin_prior,
    output_negbin,
)
from .poisson import (
    ContinuousSolverConfig,
    MassPointPrior,
    PoissonCapacityResult,
    best_onoff_rate,
    onoff_rate,
    poisson_capacity,
    rate_of_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # channels
    "ChannelMatrix",
    "binomial_conditional",
    "poisson_conditional",
    "build_fock_channel",
    "build_poisson_channel",
    "mixture_identity_check",
    # analytic baselines
    "PriorDistribution",
    "ExponentialIntensity",
    "binary_entropy",
    "holevo_g",
    "classical_capacity",
    "homodyne_capacity",
    "heterodyne_capacity",
    "bowen_asymptotic",
    "gordon_asymptotic",
    "thermal_prior",
    "gaussian_coherent_reference",
    # discrete solver
    "ConstraintSpec",
    "SolverConfig",
    "BAState",
    "CapacityResult",
    "mutual_information",
    "phi_update",
    "prior_update",
    "solve_multiplier",
    "ba_solve",
    "fock_capacity",
    # continuous solver
    "MassPointPrior",
    "ContinuousSolverConfig",
    "PoissonCapacityResult",
    "poisson_capacity",
    "rate_of_ensemble",
    "onoff_rate",
    "best_onoff_rate",
    # negative-binomial rate
    "NegBinParams",
    "OutputNegBin",
    "QuadratureError",
    "negbin_prior",
    "output_negbin",
    "negbin_entropy",
    "binomial_entropy",
    "negbin_conditional_entropy",
    "negbin_mutual_info",
    "negbin_best_rate",
    # experiments
    "SweepGrid",
    "SweepRecord",
    "LimitRecord",
    "PriorProfile",
    "run_sweep",
    "capacity_ratio_grid",
    "poisson_limit_study",
    "prior_profile",
    "scaled_fock_spot_check",
]
