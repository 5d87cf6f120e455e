"""Observation CSV schema, loading, validation and writing."""

import csv
import logging
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from core.errors import SchemaError
from core.grid import TimeAxis

from .covariates import CovariateSpec

logger = logging.getLogger(__name__)

# File header; the second ``y`` is the biomass index.
HEADER = ["source", "x", "y", "t", "i", "vessel", "z", "y"]
COLUMNS = ["source", "x", "y", "t", "i", "vessel", "z", "y_val"]


class Source(str, Enum):
    FID = "FID"
    FDD = "FDD"


class ObservationRecord(BaseModel):
    """One survey (FID) or commercial (FDD) observation."""

    model_config = ConfigDict(frozen=True)

    source: Source
    x: float
    y: float
    t: str
    i: int = 1
    vessel: int
    z: int = Field(ge=0, le=1)
    y_val: float = Field(ge=0)
    covariates: dict[str, float] = Field(default_factory=dict)


class ObservationSet(BaseModel):
    """Immutable table of validated observations, one row per record."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frame: pd.DataFrame
    covariate_names: list[str] = Field(default_factory=list)

    @classmethod
    def from_records(cls, records: list[ObservationRecord]) -> "ObservationSet":
        names = sorted({k for r in records for k in r.covariates})
        rows = []
        for r in records:
            row = {c: getattr(r, c) for c in COLUMNS}
            row["source"] = r.source.value
            row.update({k: r.covariates.get(k, np.nan) for k in names})
            rows.append(row)
        frame = pd.DataFrame(rows, columns=COLUMNS + names)
        return cls.from_frame(frame, names)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, covariate_names: list[str] | None = None) -> "ObservationSet":
        frame = frame.reset_index(drop=True).copy()
        frame["t"] = frame["t"].astype(str)
        frame["i"] = frame["i"].astype(int)
        frame["vessel"] = frame["vessel"].astype(int)
        frame["z"] = frame["z"].astype(int)
        frame["x"] = frame["x"].astype(float)
        frame["y"] = frame["y"].astype(float)
        frame["y_val"] = frame["y_val"].astype(float)
        return cls(frame=frame, covariate_names=list(covariate_names or []))

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def locations(self) -> np.ndarray:
        return self.frame[["x", "y"]].to_numpy(dtype=float)

    @property
    def z(self) -> np.ndarray:
        return self.frame["z"].to_numpy(dtype=int)

    @property
    def y(self) -> np.ndarray:
        return self.frame["y_val"].to_numpy(dtype=float)

    @property
    def vessels(self) -> np.ndarray:
        return self.frame["vessel"].to_numpy(dtype=int)

    @property
    def is_fdd(self) -> np.ndarray:
        return (self.frame["source"] == Source.FDD.value).to_numpy()

    @property
    def is_fid(self) -> np.ndarray:
        return (self.frame["source"] == Source.FID.value).to_numpy()

    def time_axis(self) -> TimeAxis:
        return TimeAxis.from_values(self.frame["t"])

    def time_index(self, axis: TimeAxis | None = None) -> np.ndarray:
        axis = axis or self.time_axis()
        lookup = {label: k for k, label in enumerate(axis.labels)}
        return self.frame["t"].map(lookup).to_numpy(dtype=int)

    def subset(self, mask: np.ndarray) -> "ObservationSet":
        return ObservationSet(
            frame=self.frame[np.asarray(mask, dtype=bool)].reset_index(drop=True),
            covariate_names=self.covariate_names,
        )

    def records(self) -> list[ObservationRecord]:
        out = []
        for row in self.frame.to_dict("records"):
            out.append(
                ObservationRecord(
                    **{c: row[c] for c in COLUMNS},
                    covariates={k: row[k] for k in self.covariate_names},
                )
            )
        return out


def _parse_float(values: pd.Series, column: str, path: Path) -> np.ndarray:
    out = np.empty(len(values))
    for k, raw in enumerate(values):
        try:
            out[k] = float(raw)
        except ValueError:
            raise SchemaError(
                f"column {column!r}: cannot parse {raw!r} as a number", line=k + 2, path=str(path)
            ) from None
    return out


def _parse_int(values: pd.Series, column: str, path: Path) -> np.ndarray:
    floats = _parse_float(values, column, path)
    bad = np.flatnonzero(floats != np.round(floats))
    if bad.size:
        raise SchemaError(
            f"column {column!r}: {values.iloc[bad[0]]!r} is not an integer",
            line=int(bad[0]) + 2, path=str(path),
        )
    return floats.astype(int)


def required_covariates(schema: list[CovariateSpec] | list[str] | None) -> list[str]:
    """Covariate columns the observation file must carry (lagged terms come from daily data)."""
    names = []
    for entry in schema or []:
        if isinstance(entry, str):
            names.append(entry)
        elif not entry.lagged and entry.name not in names:
            names.append(entry.name)
    return names


def load_observations(
    path: Path,
    schema: list[CovariateSpec] | list[str] | None = None,
    reference_vessel: int = 1,
    enforce_vessel_rule: bool = True,
) -> ObservationSet:
    """Read and validate ``source,x,y,t,i,vessel,z,y[,covariates...]``."""
    path = Path(path)
    if not path.exists():
        raise SchemaError("file not found", path=str(path))
    with open(path, newline="", encoding="utf-8") as f:
        header = next(csv.reader(f), None)
    if header is None:
        raise SchemaError("empty file", line=1, path=str(path))
    header = [h.strip() for h in header]
    if header[: len(HEADER)] != HEADER:
        raise SchemaError(
            f"expected header to start with {','.join(HEADER)}, got {','.join(header)}",
            line=1, path=str(path),
        )
    extra = header[len(HEADER) :]
    missing = [c for c in required_covariates(schema) if c not in extra]
    if missing:
        raise SchemaError(f"missing covariate columns: {', '.join(missing)}", line=1, path=str(path))

    raw = pd.read_csv(
        path, header=None, skiprows=1, names=COLUMNS + extra, dtype=str,
        keep_default_na=False, skipinitialspace=True,
    )
    frame = pd.DataFrame({"source": raw["source"].str.strip().str.upper()})
    bad_source = ~frame["source"].isin([s.value for s in Source])
    if bad_source.any():
        k = int(np.flatnonzero(bad_source.to_numpy())[0])
        raise SchemaError(
            f"source must be FID or FDD, got {raw['source'].iloc[k]!r}", line=k + 2, path=str(path)
        )
    frame["x"] = _parse_float(raw["x"], "x", path)
    frame["y"] = _parse_float(raw["y"], "y", path)
    frame["t"] = raw["t"].str.strip()
    frame["i"] = _parse_int(raw["i"], "i", path)
    frame["vessel"] = _parse_int(raw["vessel"], "vessel", path)
    frame["z"] = _parse_int(raw["z"], "z", path)
    frame["y_val"] = _parse_float(raw["y_val"], "y", path)
    for name in extra:
        frame[name] = _parse_float(raw[name], name, path)

    for k, (src, z, y, v) in enumerate(
        zip(frame["source"], frame["z"], frame["y_val"], frame["vessel"])
    ):
        line = k + 2
        if z not in (0, 1):
            raise SchemaError(f"z must be 0 or 1, got {z}", line=line, path=str(path))
        if z == 0 and y != 0:
            raise SchemaError(
                f"hurdle invariant violated: z=0 requires y=0, got y={y}", line=line, path=str(path)
            )
        if z == 1 and not y > 0:
            raise SchemaError(
                f"hurdle invariant violated: z=1 requires y>0, got y={y}", line=line, path=str(path)
            )
        if enforce_vessel_rule and (v == reference_vessel) != (src == Source.FID.value):
            raise SchemaError(
                f"vessel {v} with source {src}: vessel {reference_vessel} is reserved for FID rows",
                line=line, path=str(path),
            )

    logger.info("loaded %d observations from %s", len(frame), path)
    return ObservationSet(frame=frame, covariate_names=extra)


def write_observations(obs: ObservationSet, path: Path) -> Path:
    """Write at full precision so a reload reproduces every float."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = obs.frame[COLUMNS + obs.covariate_names].copy()
    frame.columns = HEADER + obs.covariate_names
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def observation_summary(obs: ObservationSet) -> pd.DataFrame:
    """Per source and time: count, positives, percent positive and total index."""
    frame = obs.frame.assign(positive=obs.frame["z"] == 1)
    summary = (
        frame.groupby(["source", "t"], sort=True)
        .agg(count=("z", "size"), positive=("positive", "sum"), total_index=("y_val", "sum"))
        .reset_index()
    )
    summary["percent_positive"] = 100.0 * summary["positive"] / summary["count"]
    return summary[["source", "t", "count", "positive", "percent_positive", "total_index"]]
