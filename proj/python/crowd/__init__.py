"""Hard-disk crowd motion: velocities projected onto the feasible set."""

from ._core import (
    CrowdError,
    GeometryError,
    IoError,
    SolverError,
    ValidationError,
    canonical_scenario,
    cli,
    distance_field,
    min_gap,
    oracle_project,
    project,
    prox_regularity,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "CrowdError",
    "GeometryError",
    "IoError",
    "SolverError",
    "ValidationError",
    "canonical_scenario",
    "cli",
    "distance_field",
    "min_gap",
    "oracle_project",
    "project",
    "prox_regularity",
    "run",
]
