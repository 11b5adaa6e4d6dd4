"""Simulation and verification toolkit for the symmetric inclusion process.

Exact finite-state checks of duality and stationarity, kinetic Monte
Carlo for the process, its absorbing dual and the walker coupling, and
scaling experiments for coupling distances, steady-state profiles, and
the hydrodynamic limit.
"""
from .coupling import (
    DEFAULT_ORIGIN_PULL,
    CoupledState,
    CouplingDiagnostics,
    collision_occupation_scaling,
    coupled_rates,
    discrepancy_scaling,
    estimate_additive_functional,
    simulate_coupling,
    simulate_z_chain,
    z_chain_scaling,
)
from .dynamics import (
    DualAbsorptionResult,
    EventKind,
    JumpEvent,
    Trajectory,
    labeled_sip_rates,
    simulate_boundary_driven,
    simulate_dual_absorbing,
    simulate_irw,
    simulate_sip,
    sip_bulk_rate,
)
from .exact import (
    build_generator,
    absorption_solve_single,
    boundary_stationary_profile,
    dual_absorption_solve,
    intertwining_check,
    labeled_dual_absorption_solve,
    max_boundary_intertwining_residual,
    max_intertwining_residual,
    stationary_solve,
    transient_expectation,
)
from .hydro import (
    HydroExperiment,
    MacroProfile,
    heat_solve_discrete,
    lep_check,
    profile_discretize,
    vee_estimate,
)
from .lattice import (
    LabeledPositions,
    LatticeRangeError,
    OccupationConfig,
    SiteRange,
    WindowAbortError,
    occupation_of,
    ring,
    segment,
    window,
    window_for,
)
from .measures import (
    ConvergenceError,
    ReservoirParams,
    ScaleProfile,
    boundary_duality_fn,
    density_of_lambda,
    detailed_balance_max_relerr,
    duality_fn,
    duality_poly,
    lambda_of_density,
    moment_identity_lhs,
    negbin_pmf,
    negbin_sample,
    negbin_sample_profile,
    scale_ratio,
)
from .nes import (
    NesExperiment,
    coupled_absorption_check,
    factorization_check,
    nes_correlation_dual,
    nes_profile_direct,
    nes_profile_dual,
)
from .reporting import VERSION, read_report, write_report
from .rngs import (
    EstimateWithError,
    RngStream,
    merge_estimates,
    merge_many,
    replica_map,
    resolve_seed,
    split_stream,
)

__version__ = VERSION

__all__ = [name for name in dir() if not name.startswith("_")]
