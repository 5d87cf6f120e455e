"""Local CSV ingestion: observations, daily covariates and vessel attributes."""

from .covariates import (
    CovariateSpec,
    DesignMatrices,
    LagKernel,
    TriangularLagKernel,
    build_design,
    design_from_frame,
    lag_weight,
    load_covariate_specs,
    load_daily_covariates,
)
from .observations import (
    ObservationRecord,
    ObservationSet,
    Source,
    load_observations,
    observation_summary,
    write_observations,
)
from .vessels import VesselRecord, load_vessels, vessel_design

__all__ = [
    "CovariateSpec",
    "DesignMatrices",
    "LagKernel",
    "TriangularLagKernel",
    "build_design",
    "design_from_frame",
    "lag_weight",
    "load_covariate_specs",
    "load_daily_covariates",
    "ObservationRecord",
    "ObservationSet",
    "Source",
    "load_observations",
    "observation_summary",
    "write_observations",
    "VesselRecord",
    "load_vessels",
    "vessel_design",
]
