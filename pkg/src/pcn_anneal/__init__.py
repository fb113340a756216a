"""pCN Metropolis-Hastings on a truncated Hilbert space, used as a sampler, a
simulated-annealing optimiser and a laboratory for its diffusion limit."""

from .annealing import (
    CoolingSchedule,
    ElSolution,
    TauScalingResult,
    anneal,
    energy,
    euler_lagrange_solutions,
    l2_error_series,
    l2_error_to_minimizer,
    plateau_test,
    tau_scaling_experiment,
)
from .diagnostics import (
    DiagnosticReport,
    DomainError,
    OrderFit,
    QvSeries,
    accepted_moves_gap,
    apriori_bound_witness,
    drift_growth_constant,
    fit_order,
    fluid_limit_sup_error,
    invariance_surrogates,
    quadratic_variation,
    qv_additivity_residual,
    qv_series,
)
from .gaussian import RngStream, brownian_bridge_spectrum, brownian_increment, sample_prior
from .pcn import (
    ChainState,
    Ensemble,
    PcnParams,
    Trajectory,
    acceptance_errors,
    acceptance_prob,
    approx_acceptance,
    baracc_identity,
    baracc_identity_residual,
    drift_estimate,
    empirical_drift,
    empirical_noise_covariance,
    init_state,
    interpolate,
    noise_covariance,
    propose,
    run,
    simulate,
    step,
)
from .potential import (
    DiagonalQuadratic,
    DoubleWell,
    Potential,
    ZeroPotential,
    check_domain,
    drift,
    psi_grad_spectral,
    psi_value,
    taylor_remainder_check,
)
from .sde import SdeParams, all_accepted_qv, em_run, em_step, fluid_ode_solution, ou_exact_step
from .spectral import (
    CovarianceSpectrum,
    DimensionError,
    GridField,
    ResolutionError,
    SpectralField,
    apply_C_power,
    sobolev_norm,
    to_grid,
    to_spectral,
    trace_hr,
)

__version__ = "0.1.0"

__all__ = [
    "acceptance_errors",
    "acceptance_prob",
    "accepted_moves_gap",
    "all_accepted_qv",
    "anneal",
    "apply_C_power",
    "approx_acceptance",
    "apriori_bound_witness",
    "baracc_identity",
    "baracc_identity_residual",
    "brownian_bridge_spectrum",
    "brownian_increment",
    "ChainState",
    "check_domain",
    "CoolingSchedule",
    "CovarianceSpectrum",
    "DiagnosticReport",
    "DiagonalQuadratic",
    "DimensionError",
    "DomainError",
    "DoubleWell",
    "drift",
    "drift_estimate",
    "drift_growth_constant",
    "ElSolution",
    "em_run",
    "em_step",
    "empirical_drift",
    "empirical_noise_covariance",
    "energy",
    "Ensemble",
    "euler_lagrange_solutions",
    "fit_order",
    "fluid_limit_sup_error",
    "fluid_ode_solution",
    "GridField",
    "init_state",
    "interpolate",
    "invariance_surrogates",
    "l2_error_series",
    "l2_error_to_minimizer",
    "noise_covariance",
    "OrderFit",
    "ou_exact_step",
    "PcnParams",
    "plateau_test",
    "Potential",
    "propose",
    "psi_grad_spectral",
    "psi_value",
    "quadratic_variation",
    "qv_additivity_residual",
    "qv_series",
    "QvSeries",
    "ResolutionError",
    "RngStream",
    "run",
    "sample_prior",
    "SdeParams",
    "simulate",
    "sobolev_norm",
    "SpectralField",
    "step",
    "tau_scaling_experiment",
    "TauScalingResult",
    "taylor_remainder_check",
    "to_grid",
    "to_spectral",
    "trace_hr",
    "Trajectory",
    "ZeroPotential",
]
