"""Equilibria and linear stability of droop-controlled inverter networks."""

from .criteria import (
    CriterionResult,
    SpectralAux,
    angle_condition,
    connectivity_necessary_bound,
    connectivity_norm_bound,
    droop_connectivity_bound,
    evaluate_criteria,
    schur_angle_criterion,
    schur_decomposition,
    schur_voltage_criterion,
    spectral_aux,
    voltage_droop_bound,
    voltage_instability_certificate,
)
from .equilibrium import (
    Equilibrium,
    EquilibriumNotFound,
    SingleInverterParams,
    SingularIterateError,
    residual,
    residual_norm,
    single_inverter_equilibria,
    solve_newton,
)
from .linearization import (
    LinearizedSystem,
    StabilityReport,
    build_linearization,
    coupling_matrices,
    definiteness_on_subspace,
    eigen_stability,
    full_jacobian,
    lyapunov_decrement,
    reduced_jacobian,
    shift_complement_basis,
)
from .network import (
    GridNetwork,
    InverterParams,
    SystemState,
    build_network,
    kron_reduce,
    load_network,
    network_from_dict,
    power_injections,
    save_network,
)
from .simulate import Schedule, Trajectory, classify, classify_segments, integrate
from .sweep import (
    AuditReport,
    Axis,
    StabilityMap,
    SweepSpec,
    containment_audit,
    separatrix,
    sweep,
)
from .systems import SystemSpec, builtin_spec, single_inverter_spec, tree_spec, two_inverter_spec

__version__ = "0.1.0"

__all__ = [
    "AuditReport", "Axis", "CriterionResult", "Equilibrium", "EquilibriumNotFound",
    "GridNetwork", "InverterParams", "LinearizedSystem", "Schedule",
    "SingleInverterParams", "SingularIterateError", "SpectralAux", "StabilityMap",
    "StabilityReport", "SweepSpec", "SystemSpec", "SystemState", "Trajectory",
    "angle_condition", "build_linearization", "build_network", "builtin_spec",
    "classify", "classify_segments", "connectivity_necessary_bound",
    "connectivity_norm_bound", "containment_audit", "coupling_matrices",
    "definiteness_on_subspace", "droop_connectivity_bound", "eigen_stability",
    "evaluate_criteria", "full_jacobian", "integrate", "kron_reduce",
    "load_network", "lyapunov_decrement", "network_from_dict", "power_injections",
    "reduced_jacobian", "residual", "residual_norm", "save_network",
    "schur_angle_criterion", "schur_decomposition", "schur_voltage_criterion",
    "separatrix", "shift_complement_basis", "single_inverter_equilibria",
    "single_inverter_spec", "solve_newton", "spectral_aux", "sweep",
    "tree_spec", "two_inverter_spec", "voltage_droop_bound",
    "voltage_instability_certificate",
]
