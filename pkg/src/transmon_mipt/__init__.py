"""Quantum-trajectory simulation of a monitored transmon array.

Attractively interacting bosons hop on a chain while every site is
projectively measured at random times. Sparse measurements leave the
half-chain entanglement growing with system size; frequent measurements
pin it to an area law, with a sharp transition in between. Alongside
the standard number measurement the package implements a predetermined
variant that re-prepares a fixed target occupation after each readout,
which moves every signature of the transition into directly observable
boson-number distributions: no post-selection over measurement records
is needed. A replica-space analytic treatment and an exact trajectory
enumerator provide independent checks on the sampler.
"""

__version__ = "0.1.0"

from .diagnostics import (
    CrossingResult,
    FssaParams,
    NoCrossingError,
    ReferenceDistributions,
    collapse_quality,
    crossing_point,
    distribution_distance,
    fssa_collapse,
    reference_distributions,
)
from .engine import (
    RunConfig,
    TrajectoryRecord,
    Workspace,
    half_region,
    resolve_workers,
    run_ensemble,
    run_trajectory,
)
from .evolution import (
    BHParams,
    Propagator,
    TrotterLayers,
    build_hamiltonian,
    build_propagator,
    draw_couplings,
    evolve_step,
    trotter_step,
)
from .fock import (
    FockBasis,
    StateVector,
    build_basis,
    number_moments,
    sample_configuration,
    schmidt_entropy,
)
from .measure import (
    MeasurementEvent,
    MeasurementSpec,
    apply_predetermined,
    apply_standard,
    default_pattern,
    measurement_layer,
    outcome_weights,
)
from .oracle import OracleResult, area_law_closed_forms, enumerate_trajectories
from .replica import (
    BiorthoBasis,
    EnlargedOperator,
    biortho_basis,
    bond_weights,
    build_enlarged_heff,
    closed_form_entropy,
    closed_form_fluctuation,
    closed_form_occupation,
    closed_form_region_number,
    exact_ground_biortho,
    perturb_ground,
    replica_observables,
)
from .stats import (
    EnsembleStats,
    InsufficientSectorData,
    RunningMoments,
    accumulate,
    asymptotic_scaling_fit,
    merge,
    merge_moments,
)

__all__ = [
    "__version__",
    "BHParams",
    "BiorthoBasis",
    "CrossingResult",
    "EnlargedOperator",
    "EnsembleStats",
    "FockBasis",
    "FssaParams",
    "InsufficientSectorData",
    "MeasurementEvent",
    "MeasurementSpec",
    "NoCrossingError",
    "OracleResult",
    "Propagator",
    "ReferenceDistributions",
    "RunConfig",
    "RunningMoments",
    "StateVector",
    "TrajectoryRecord",
    "TrotterLayers",
    "Workspace",
    "accumulate",
    "apply_predetermined",
    "apply_standard",
    "area_law_closed_forms",
    "asymptotic_scaling_fit",
    "biortho_basis",
    "bond_weights",
    "build_basis",
    "build_enlarged_heff",
    "build_hamiltonian",
    "build_propagator",
    "closed_form_entropy",
    "closed_form_fluctuation",
    "closed_form_occupation",
    "closed_form_region_number",
    "collapse_quality",
    "crossing_point",
    "default_pattern",
    "distribution_distance",
    "draw_couplings",
    "enumerate_trajectories",
    "evolve_step",
    "exact_ground_biortho",
    "fssa_collapse",
    "half_region",
    "measurement_layer",
    "merge",
    "merge_moments",
    "number_moments",
    "outcome_weights",
    "perturb_ground",
    "reference_distributions",
    "replica_observables",
    "resolve_workers",
    "run_ensemble",
    "run_trajectory",
    "sample_configuration",
    "schmidt_entropy",
    "trotter_step",
]
