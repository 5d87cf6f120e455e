"""Covariate specifications, lag-weighted averages and design matrices."""

import logging
from abc import ABC, abstractmethod
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
import patsy
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial import cKDTree

from core.errors import InvalidArgumentError, MissingDataError, SchemaError

if TYPE_CHECKING:
    from .observations import ObservationSet

logger = logging.getLogger(__name__)

DAILY_COLUMNS = ["date", "x", "y", "name", "value"]


class Transform(str, Enum):
    IDENTITY = "identity"
    LAG_WEIGHTED = "lag_weighted"
    SPLINE_BASIS = "spline_basis"


class SplineKind(str, Enum):
    BS = "bs"
    CR = "cr"


class CovariateSpec(BaseModel):
    """One model term: a raw column, a lag-weighted daily series or a spline basis.

    ``c`` and ``l`` are the peak lag and window (days) of a lag-weighted term;
    ``knots`` counts the spline knots including both boundary knots. A spline
    term may read a lag-weighted value by setting ``c``/``l`` as well.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    transform: Transform = Transform.IDENTITY
    c: int | None = None
    l: int | None = None
    kind: SplineKind = SplineKind.BS
    knots: int = 3
    targets: list[str] = Field(default_factory=lambda: ["presence", "biomass"])

    @model_validator(mode="after")
    def _check(self) -> "CovariateSpec":
        if self.transform is Transform.LAG_WEIGHTED and (self.c is None or self.l is None):
            raise ValueError(f"{self.name}: lag weighting needs c and l")
        if self.c is not None or self.l is not None:
            c, l = self.c or 0, self.l or 0
            if c < 0 or l < 0 or c > l:
                raise ValueError(f"{self.name}: need 0 <= c <= l, got c={c}, l={l}")
        if self.transform is Transform.SPLINE_BASIS and self.knots < 3:
            raise ValueError(f"{self.name}: spline bases need at least 3 knots")
        unknown = set(self.targets) - {"presence", "biomass"}
        if unknown or not self.targets:
            raise ValueError(f"{self.name}: targets must be presence and/or biomass")
        return self

    @property
    def lagged(self) -> bool:
        return self.c is not None and self.l is not None

    @property
    def label(self) -> str:
        base = f"K({self.name},{self.c},{self.l})" if self.lagged else self.name
        if self.transform is Transform.SPLINE_BASIS:
            return f"{self.kind.value}({base})"
        return base


def load_covariate_specs(path: Path) -> list[CovariateSpec]:
    """Read a YAML list of covariate specs (``covariates:`` key or a bare list)."""
    with open(path) as f:
        data = yaml.safe_load(f) or []
    if isinstance(data, dict):
        data = data.get("covariates", [])
    return [CovariateSpec(**entry) for entry in data]


class LagKernel(ABC):
    """Weights over lags 0..l for the weighted average K(C, c, l)."""

    @abstractmethod
    def weights(self, c: int, l: int) -> np.ndarray:
        """Normalized weights, index k = lag k days before the observation."""


class TriangularLagKernel(LagKernel):
    """Triangle rising from lag 0 to a peak at lag c and falling to lag l."""

    def weights(self, c: int, l: int) -> np.ndarray:
        if c < 0 or l < 0 or c > l:
            raise InvalidArgumentError(f"need 0 <= c <= l, got c={c}, l={l}")
        k = np.arange(l + 1, dtype=float)
        w = np.where(k <= c, (k + 1) / (c + 1), (l - k + 1) / (l - c + 1))
        return w / w.sum()


DEFAULT_KERNEL = TriangularLagKernel()


def lag_weight(series, c: int, l: int, kernel: LagKernel | None = None) -> float:
    """K(C, c, l) for a series indexed by lag (series[0] = observation day)."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] < l + 1 or not np.all(np.isfinite(series[: l + 1])):
        raise MissingDataError(
            f"lag window needs finite values for lags 0..{l}, got {series.shape[0]}"
        )
    w = (kernel or DEFAULT_KERNEL).weights(c, l)
    return float(np.dot(w, series[: l + 1]))


def load_daily_covariates(path: Path) -> pd.DataFrame:
    """Daily covariate table ``date,x,y,name,value``."""
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns[: len(DAILY_COLUMNS)]) != DAILY_COLUMNS:
        raise SchemaError(
            f"expected header {','.join(DAILY_COLUMNS)}, got {','.join(frame.columns)}",
            line=1, path=str(path),
        )
    try:
        frame["date"] = pd.to_datetime(frame["date"]).dt.date
    except (ValueError, TypeError) as e:
        raise SchemaError(f"unparseable date: {e}", path=str(path)) from e
    return frame


def observation_dates(t_labels, subperiods) -> list[date]:
    """Day ``i`` (1-based) of year ``t``."""
    out = []
    for t, i in zip(t_labels, subperiods):
        try:
            year = int(float(t))
        except ValueError:
            raise InvalidArgumentError(
                f"time label {t!r} is not a year; lagged covariates need dated rows"
            ) from None
        out.append(date(year, 1, 1) + timedelta(days=int(i) - 1))
    return out


def lagged_values(
    frame: pd.DataFrame,
    daily: pd.DataFrame,
    spec: CovariateSpec,
    kernel: LagKernel | None = None,
) -> np.ndarray:
    """K(name, c, l) at each row of ``frame`` from the nearest daily location."""
    rows = daily[daily["name"] == spec.name]
    if rows.empty:
        raise MissingDataError(f"no daily values for covariate {spec.name!r}")
    sites = rows[["x", "y"]].drop_duplicates().to_numpy(dtype=float)
    tree = cKDTree(sites)
    _, nearest = tree.query(frame[["x", "y"]].to_numpy(dtype=float))
    site_of = {tuple(s): k for k, s in enumerate(sites)}
    series_by_site: dict[int, dict[date, float]] = {}
    for (sx, sy), group in rows.groupby(["x", "y"]):
        series_by_site[site_of[(float(sx), float(sy))]] = dict(zip(group["date"], group["value"]))

    days = observation_dates(frame["t"], frame["i"])
    values = np.empty(len(frame))
    for r, (site, day) in enumerate(zip(nearest, days)):
        lookup = series_by_site[int(site)]
        series = [lookup.get(day - timedelta(days=k), np.nan) for k in range(spec.l + 1)]
        try:
            values[r] = lag_weight(series, spec.c, spec.l, kernel)
        except MissingDataError:
            first = day - timedelta(days=spec.l)
            raise MissingDataError(
                f"{spec.name}: row {r} needs daily values from {first} to {day}"
            ) from None
    return values


def spline_knots(x: np.ndarray, count: int) -> np.ndarray:
    """``count`` knots at equally spaced quantiles, boundaries included."""
    knots = np.unique(np.quantile(np.asarray(x, dtype=float), np.linspace(0, 1, count)))
    if knots.size < 3:
        raise InvalidArgumentError("covariate has too few distinct values for a spline")
    return knots


def spline_basis(x: np.ndarray, kind: SplineKind | str, knots: np.ndarray) -> np.ndarray:
    """Cubic B-spline (``bs``) or cubic regression spline (``cr``) basis."""
    kind = SplineKind(kind)
    lo, hi = float(knots[0]), float(knots[-1])
    x = np.clip(np.asarray(x, dtype=float), lo, hi)
    inner = list(knots[1:-1])
    if kind is SplineKind.BS:
        basis = patsy.bs(
            x, knots=inner, degree=3, include_intercept=True, lower_bound=lo, upper_bound=hi
        )
    else:
        basis = patsy.cr(x, knots=inner, lower_bound=lo, upper_bound=hi)
    return np.asarray(basis, dtype=float)


class DesignMatrices(BaseModel):
    """Presence and biomass designs with column labels and spline block layout."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    presence: np.ndarray
    biomass: np.ndarray
    presence_columns: list[str]
    biomass_columns: list[str]
    presence_blocks: list[tuple[int, int]] = Field(default_factory=list)
    biomass_blocks: list[tuple[int, int]] = Field(default_factory=list)
    knots: dict[str, list[float]] = Field(default_factory=dict)

    def identifiable(self) -> "DesignMatrices":
        """Drop the first column of every spline block (the intercept absorbs it)."""

        def trim(matrix, columns, blocks):
            drop = {start for start, _ in blocks}
            keep = [j for j in range(matrix.shape[1]) if j not in drop]
            new_blocks, shift = [], 0
            for start, width in blocks:
                new_blocks.append((start - shift, width - 1))
                shift += 1
            return matrix[:, keep], [columns[j] for j in keep], new_blocks

        p, pc, pb = trim(self.presence, self.presence_columns, self.presence_blocks)
        b, bc, bb = trim(self.biomass, self.biomass_columns, self.biomass_blocks)
        return DesignMatrices(
            presence=p, biomass=b, presence_columns=pc, biomass_columns=bc,
            presence_blocks=pb, biomass_blocks=bb, knots=self.knots,
        )


def design_from_frame(
    frame: pd.DataFrame,
    specs: list[CovariateSpec],
    daily: pd.DataFrame | None = None,
    knots: dict[str, list[float]] | None = None,
    kernel: LagKernel | None = None,
) -> DesignMatrices:
    """Evaluate ``specs`` on the rows of ``frame`` in declaration order.

    ``knots`` fixes spline knots (e.g. those of a training design); missing
    entries are placed at quantiles of the column.
    """
    knots = dict(knots or {})
    n = len(frame)
    columns = {"presence": [], "biomass": []}
    labels = {"presence": [], "biomass": []}
    blocks = {"presence": [], "biomass": []}

    for spec in specs:
        if spec.lagged:
            if daily is None:
                raise MissingDataError(f"{spec.label} needs a daily covariate table")
            raw = lagged_values(frame, daily, spec, kernel)
        elif spec.name in frame.columns:
            raw = frame[spec.name].to_numpy(dtype=float)
        else:
            raise SchemaError(f"missing covariate column {spec.name!r}")

        if spec.transform is Transform.SPLINE_BASIS:
            if spec.label not in knots:
                knots[spec.label] = spline_knots(raw, spec.knots).tolist()
            basis = spline_basis(raw, spec.kind, np.asarray(knots[spec.label]))
            names = [f"{spec.label}[{j}]" for j in range(basis.shape[1])]
        else:
            basis = raw.reshape(n, 1)
            names = [spec.label]

        for target in spec.targets:
            if spec.transform is Transform.SPLINE_BASIS:
                start = sum(block.shape[1] for block in columns[target])
                blocks[target].append((start, basis.shape[1]))
            columns[target].append(basis)
            labels[target].extend(names)

    def stack(target):
        return np.hstack(columns[target]) if columns[target] else np.zeros((n, 0))

    return DesignMatrices(
        presence=stack("presence"),
        biomass=stack("biomass"),
        presence_columns=labels["presence"],
        biomass_columns=labels["biomass"],
        presence_blocks=blocks["presence"],
        biomass_blocks=blocks["biomass"],
        knots=knots,
    )


def build_design(
    obs: "ObservationSet",
    specs: list[CovariateSpec],
    daily: pd.DataFrame | None = None,
    knots: dict[str, list[float]] | None = None,
) -> DesignMatrices:
    return design_from_frame(obs.frame, specs, daily=daily, knots=knots)
