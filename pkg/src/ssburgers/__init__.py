"""Coupled Sasamoto-Spohn lattice SDEs.

Exact verification of the invariance algebra (rational polynomial identities)
plus seeded Monte Carlo reproduction of the weakly-asymmetric scaling
estimates: martingale quadratic variation, second-order block-average
replacement, energy-condition shape, fixed-time Gaussianity.
"""

from .backend import active_backend
from .coefficients import (
    GammaTensor,
    ModelCoefficients,
    check_model_constraints,
    check_trilinear,
    gamma_to_model,
    model_to_gamma,
)
from .dynamics import (
    LatticeState,
    Trajectory,
    drift_eval,
    em_step,
    sample_stationary,
    simulate,
)
from .fields import (
    TestFunction,
    block_averages,
    bg_discrepancy,
    crossed_bg_discrepancy,
    fluctuation_field,
    martingale_decomposition,
    quadratic_field,
    y_remainder,
)
from .stats import ExperimentSpec, gaussianity_check, run_ensemble, scaling_fit
from .symbolic import (
    GeneratorParams,
    LatticePolynomial,
    apply_adjoint,
    apply_generator,
    divergence_identity,
    drift_polynomial,
    gaussian_expectation,
    stationarity_residual,
)

__version__ = "0.1.0"

__all__ = [
    "GammaTensor",
    "ModelCoefficients",
    "check_trilinear",
    "check_model_constraints",
    "gamma_to_model",
    "model_to_gamma",
    "LatticePolynomial",
    "GeneratorParams",
    "drift_polynomial",
    "divergence_identity",
    "apply_generator",
    "apply_adjoint",
    "gaussian_expectation",
    "stationarity_residual",
    "LatticeState",
    "Trajectory",
    "sample_stationary",
    "drift_eval",
    "em_step",
    "simulate",
    "TestFunction",
    "fluctuation_field",
    "block_averages",
    "martingale_decomposition",
    "bg_discrepancy",
    "crossed_bg_discrepancy",
    "quadratic_field",
    "y_remainder",
    "ExperimentSpec",
    "run_ensemble",
    "scaling_fit",
    "gaussianity_check",
    "active_backend",
    "__version__",
]
