"""Vessel attribute table used by the catchability model."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.errors import SchemaError

from .covariates import CovariateSpec, DesignMatrices, design_from_frame

logger = logging.getLogger(__name__)

VESSEL_COLUMNS = ["vessel", "length_m", "power_kw"]


class VesselRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    vessel: int
    length_m: float = Field(gt=0)
    power_kw: float = Field(gt=0)


def load_vessels(path: Path) -> dict[int, VesselRecord]:
    """Read ``vessel,length_m,power_kw``."""
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns[:3]) != VESSEL_COLUMNS:
        raise SchemaError(
            f"expected header {','.join(VESSEL_COLUMNS)}, got {','.join(frame.columns)}",
            line=1, path=str(path),
        )
    vessels: dict[int, VesselRecord] = {}
    for k, row in enumerate(frame[VESSEL_COLUMNS].to_dict("records")):
        try:
            record = VesselRecord(**row)
        except ValidationError as e:
            raise SchemaError(
                f"invalid vessel row: {e.errors()[0]['msg']}", line=k + 2, path=str(path)
            ) from None
        if record.vessel in vessels:
            raise SchemaError(f"duplicate vessel {record.vessel}", line=k + 2, path=str(path))
        vessels[record.vessel] = record
    return vessels


def vessel_design(
    vessels: dict[int, VesselRecord],
    specs: list[CovariateSpec],
    ids: list[int] | None = None,
) -> tuple[np.ndarray, list[str]]:
    """Attribute design (rows in ``ids`` order) for the catchability terms f_c(F).

    Spline blocks lose their first column since the catchability intercept
    absorbs it.
    """
    ids = list(ids if ids is not None else sorted(vessels))
    frame = pd.DataFrame([vessels[v].model_dump() for v in ids])
    specs = [spec.model_copy(update={"targets": ["biomass"]}) for spec in specs]
    design: DesignMatrices = design_from_frame(frame, specs).identifiable()
    return design.biomass, design.biomass_columns
