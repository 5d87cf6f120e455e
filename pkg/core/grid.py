"""Spatial lattice, observation projection and the shared time axis."""

import math
from functools import lru_cache

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import sparse

from .errors import InvalidArgumentError, OutOfDomainError

# Coordinates closer than this (in lattice units) to a node are snapped onto it.
SNAP_TOL = 1e-9
# Bilinear weights below this are dropped from the projection.
WEIGHT_TOL = 1e-14


def _grid_problem(nx, ny, xmin, xmax, ymin, ymax, pad_fraction) -> str | None:
    if nx < 2 or ny < 2:
        return f"grid needs at least 2 nodes per axis, got {nx}x{ny}"
    if not (xmax > xmin and ymax > ymin):
        return "grid bounds must have positive extent"
    if pad_fraction < 0:
        return "pad_fraction must be non-negative"
    return None


class SpatialGrid(BaseModel):
    """Regular lattice over a rectangle with symmetric boundary padding.

    Nodes are numbered row-major over the padded lattice, ``j * full_nx + i``.
    ``cell_area`` is the lattice cell area ``hx * hy`` used by the mass matrix.
    Integrals over the domain use ``quadrature_weights``: the dual-cell area
    of each interior node clipped to the domain, zero on padding nodes, so the
    weights sum to the domain area.
    """

    model_config = ConfigDict(frozen=True)

    nx: int
    ny: int
    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0
    pad_fraction: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "SpatialGrid":
        problem = _grid_problem(
            self.nx, self.ny, self.xmin, self.xmax, self.ymin, self.ymax,
            self.pad_fraction,
        )
        if problem:
            raise ValueError(problem)
        return self

    @property
    def boundary_pad(self) -> int:
        return math.ceil(self.pad_fraction * max(self.nx, self.ny) - 1e-12)

    @property
    def full_nx(self) -> int:
        return self.nx + 2 * self.boundary_pad

    @property
    def full_ny(self) -> int:
        return self.ny + 2 * self.boundary_pad

    @property
    def n_nodes(self) -> int:
        return self.full_nx * self.full_ny

    @property
    def n_interior(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def domain_area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def width(self) -> float:
        return max(self.xmax - self.xmin, self.ymax - self.ymin)

    @property
    def node_coords(self) -> np.ndarray:
        return _node_coords(self)

    @property
    def interior_mask(self) -> np.ndarray:
        return _interior_mask(self)

    @property
    def interior_indices(self) -> np.ndarray:
        return _interior_indices(self)

    @property
    def quadrature_weights(self) -> np.ndarray:
        return _quadrature_weights(self)

    def node_index(self, i: int, j: int) -> int:
        """Padded-lattice index of interior node (i, j), 0-based from the lower left."""
        p = self.boundary_pad
        return (j + p) * self.full_nx + (i + p)

    def coarsen(self, k: int) -> "SpatialGrid":
        """Mesh with every k-th lattice line over the same bounds."""
        if k < 1:
            raise InvalidArgumentError(f"mesh_subsample must be >= 1, got {k}")
        if k == 1:
            return self
        return SpatialGrid(
            nx=max((self.nx - 1) // k + 1, 2),
            ny=max((self.ny - 1) // k + 1, 2),
            xmin=self.xmin, xmax=self.xmax, ymin=self.ymin, ymax=self.ymax,
            pad_fraction=self.pad_fraction,
        )

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tx = 1e-12 * (self.xmax - self.xmin)
        ty = 1e-12 * (self.ymax - self.ymin)
        return (
            (points[:, 0] >= self.xmin - tx)
            & (points[:, 0] <= self.xmax + tx)
            & (points[:, 1] >= self.ymin - ty)
            & (points[:, 1] <= self.ymax + ty)
        )

    def node_table(self) -> pd.DataFrame:
        coords = self.node_coords
        return pd.DataFrame(
            {
                "node_id": np.arange(self.n_nodes),
                "x": coords[:, 0],
                "y": coords[:, 1],
                "interior": self.interior_mask,
            }
        )

    def metadata(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "bounds": [self.xmin, self.xmax, self.ymin, self.ymax],
            "boundary_pad": self.boundary_pad,
            "n_nodes": self.n_nodes,
            "cell_area": self.cell_area,
            "quadrature": "dual-cell areas clipped to the domain; zero on padding",
        }


@lru_cache(maxsize=64)
def _node_coords(grid: SpatialGrid) -> np.ndarray:
    p = grid.boundary_pad
    xs = grid.xmin + (np.arange(grid.full_nx) - p) * grid.hx
    ys = grid.ymin + (np.arange(grid.full_ny) - p) * grid.hy
    gx, gy = np.meshgrid(xs, ys)
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    coords.flags.writeable = False
    return coords


@lru_cache(maxsize=64)
def _interior_mask(grid: SpatialGrid) -> np.ndarray:
    p = grid.boundary_pad
    mask = np.zeros((grid.full_ny, grid.full_nx), dtype=bool)
    mask[p : p + grid.ny, p : p + grid.nx] = True
    mask = mask.ravel()
    mask.flags.writeable = False
    return mask


@lru_cache(maxsize=64)
def _interior_indices(grid: SpatialGrid) -> np.ndarray:
    idx = np.flatnonzero(_interior_mask(grid))
    idx.flags.writeable = False
    return idx


@lru_cache(maxsize=64)
def _quadrature_weights(grid: SpatialGrid) -> np.ndarray:
    wx = np.full(grid.nx, grid.hx)
    wx[[0, -1]] *= 0.5
    wy = np.full(grid.ny, grid.hy)
    wy[[0, -1]] *= 0.5
    weights = np.zeros(grid.n_nodes)
    weights[_interior_indices(grid)] = np.outer(wy, wx).ravel()
    weights.flags.writeable = False
    return weights


def build_grid(
    nx: int,
    ny: int,
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    pad_fraction: float = 0.0,
) -> SpatialGrid:
    """Build a padded lattice over ``bounds = (xmin, xmax, ymin, ymax)``."""
    xmin, xmax, ymin, ymax = bounds
    problem = _grid_problem(nx, ny, xmin, xmax, ymin, ymax, pad_fraction)
    if problem:
        raise InvalidArgumentError(problem)
    return SpatialGrid(
        nx=nx, ny=ny, xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax,
        pad_fraction=pad_fraction,
    )


class Projection(BaseModel):
    """Sparse bilinear map from node values to values at observation locations."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: sparse.csr_matrix

    @property
    def n_locations(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values


def _locate(coord: np.ndarray, origin: float, step: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    f = (coord - origin) / step
    nearest = np.rint(f)
    f = np.where(np.abs(f - nearest) < SNAP_TOL, nearest, f)
    f = np.clip(f, 0.0, n - 1)
    lower = np.minimum(np.floor(f), n - 2).astype(int)
    return lower, f - lower


def project(grid: SpatialGrid, locations: np.ndarray) -> Projection:
    """Bilinear projection of ``locations`` (m x 2) onto the grid nodes."""
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    inside = grid.contains(locations)
    if not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise OutOfDomainError(bad, tuple(locations[bad]))

    i0, tx = _locate(locations[:, 0], grid.xmin, grid.hx, grid.nx)
    j0, ty = _locate(locations[:, 1], grid.ymin, grid.hy, grid.ny)
    p, full_nx = grid.boundary_pad, grid.full_nx

    rows, cols, vals = [], [], []
    m = locations.shape[0]
    for di, dj, w in (
        (0, 0, (1 - tx) * (1 - ty)),
        (1, 0, tx * (1 - ty)),
        (0, 1, (1 - tx) * ty),
        (1, 1, tx * ty),
    ):
        keep = w > WEIGHT_TOL
        rows.append(np.arange(m)[keep])
        cols.append(((j0 + dj + p) * full_nx + (i0 + di + p))[keep])
        vals.append(w[keep])

    matrix = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, grid.n_nodes),
    )
    # renormalize the rows that lost a dropped weight
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    matrix = sparse.diags(1.0 / np.where(sums > 0, sums, 1.0)) @ matrix
    return Projection(matrix=matrix.tocsr())


def project_between(source: SpatialGrid, target: SpatialGrid) -> Projection:
    """Projection of ``source`` node values onto the interior nodes of ``target``."""
    return project(source, target.node_coords[target.interior_indices])


class TimeAxis(BaseModel):
    """Ordered time labels t_1..t_T."""

    model_config = ConfigDict(frozen=True)

    labels: list[str] = Field(min_length=1)

    @field_validator("labels", mode="before")
    @classmethod
    def _stringify(cls, value):
        return [str(v) for v in value]

    @field_validator("labels")
    @classmethod
    def _check_order(cls, labels: list[str]) -> list[str]:
        try:
            keys = [float(label) for label in labels]
        except ValueError:
            keys = labels
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValueError(f"time labels must be strictly ordered: {labels}")
        return labels

    @classmethod
    def from_count(cls, T: int) -> "TimeAxis":
        if T < 1:
            raise InvalidArgumentError(f"T must be >= 1, got {T}")
        return cls(labels=[str(t) for t in range(1, T + 1)])

    @classmethod
    def from_values(cls, values) -> "TimeAxis":
        """Axis over the distinct values, in numeric order when they are numeric."""
        unique = {str(v) for v in values}
        try:
            ordered = sorted(unique, key=float)
        except ValueError:
            ordered = sorted(unique)
        return cls(labels=ordered)

    @property
    def T(self) -> int:
        return len(self.labels)

    def index_of(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidArgumentError(f"unknown time label {label!r}") from None
