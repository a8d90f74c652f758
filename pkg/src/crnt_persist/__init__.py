"""Persistence diagnostics for mass-action chemical reaction networks."""

from __future__ import annotations

from .errors import CRNError
from .kinetics import RateSchedule, Trajectory, boundary_distance_series, conserved_drift, integrate, mass_action_rhs
from .lyapunov import (
    LyapunovProbe,
    c1_monitor,
    complex_balanced_equilibrium,
    lyapunov_derivative,
    lyapunov_value,
    minimal_siphons,
)
from .network import (
    ReactionNetwork,
    deficiency,
    is_weakly_reversible,
    linkage_classes,
    load_network,
    parse_network,
    stoichiometric_subspace,
    structural_summary,
)
from .reduction import ReducedSystem, bounded_kinetics_certificate, projected_rates, reduce_network
from .report import PersistenceReport, RunParams, diagnose, omega_limit_estimate
from .tiers import (
    RespectingRelation,
    TierPartition,
    check_boundary_conservation,
    find_respecting_relation,
    partition_along_points,
)

__all__ = [
    "CRNError",
    "LyapunovProbe",
    "PersistenceReport",
    "RateSchedule",
    "ReactionNetwork",
    "ReducedSystem",
    "RespectingRelation",
    "RunParams",
    "TierPartition",
    "Trajectory",
    "boundary_distance_series",
    "bounded_kinetics_certificate",
    "c1_monitor",
    "check_boundary_conservation",
    "complex_balanced_equilibrium",
    "conserved_drift",
    "deficiency",
    "diagnose",
    "find_respecting_relation",
    "integrate",
    "is_weakly_reversible",
    "linkage_classes",
    "load_network",
    "lyapunov_derivative",
    "lyapunov_value",
    "mass_action_rhs",
    "minimal_siphons",
    "omega_limit_estimate",
    "parse_network",
    "partition_along_points",
    "projected_rates",
    "reduce_network",
    "stoichiometric_subspace",
    "structural_summary",
]
