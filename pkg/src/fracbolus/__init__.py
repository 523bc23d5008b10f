"""Pathwise fractional one-compartment IV bolus pharmacokinetic model.

Simulation of the concentration process driven by fractional Brownian
motion, Gaussian analytics of its fractional Ornstein-Uhlenbeck transform
(covariances, densities, deviation bounds, sigma budgets), parameter
estimators, and a data-driven parameter-choice procedure.
"""

from .analytics import (
    BudgetQuery,
    GaussianSpec,
    borell_deviation_bound,
    build_gaussian_spec,
    concentration_envelope,
    density_chi_n,
    deviation_radius,
    r_h_theta,
    r_x,
    sigma_budget,
)
from .errors import (
    CholeskyError,
    DegenerateInputError,
    NumericalError,
    QuadratureError,
    SingularCovarianceError,
    ValidationError,
)
from .estimation import (
    EstimationResult,
    ObservationSet,
    ergodic_moment,
    hurst_hat,
    regression_upsilon,
    sigma_hat,
    to_fou_observations,
    upsilon_hat_known,
    upsilon_hat_unknown,
)
from .fbm import SamplePath, TimeGrid, fbm_covariance, simulate_fbm_exact, simulate_fbm_volterra
from .model import ModelParams, ProcessBundle, deterministic_solution, simulate_concentration
from .procedure import ProcedureConfig, ProcedureReport, budget_table, observed_deviation_radius, run_procedure

__version__ = "0.1.0"
