"""Sampling designs: uniform or systematic FID locations and preferential FDD nodes."""

import logging
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import InvalidArgumentError
from .grid import SpatialGrid
from .seeding import SeedLike, as_generator

logger = logging.getLogger(__name__)


class FidMode(str, Enum):
    UNIFORM = "uniform"
    SYSTEMATIC = "systematic"


class PreferentialParams(BaseModel):
    """Per-time intercept alpha'' and field loadings beta' (on V) and beta (on U)."""

    model_config = ConfigDict(frozen=True)

    alpha_pp: list[float]
    beta_prime: list[float]
    beta: list[float]

    @model_validator(mode="after")
    def _check(self) -> "PreferentialParams":
        if not (len(self.alpha_pp) == len(self.beta_prime) == len(self.beta) >= 1):
            raise ValueError("alpha_pp, beta_prime and beta must all have length T")
        values = [*self.alpha_pp, *self.beta_prime, *self.beta]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("preferential parameters must be finite")
        return self

    @property
    def T(self) -> int:
        return len(self.alpha_pp)

    @classmethod
    def zeros(cls, T: int) -> "PreferentialParams":
        return cls(alpha_pp=[0.0] * T, beta_prime=[0.0] * T, beta=[0.0] * T)


def log_intensity(V: np.ndarray, U: np.ndarray, p: PreferentialParams, t: int) -> np.ndarray:
    return p.alpha_pp[t] + p.beta_prime[t] * np.asarray(V) + p.beta[t] * np.asarray(U)


def intensity_surface(
    grid: SpatialGrid, V: np.ndarray, U: np.ndarray, p: PreferentialParams, t: int
) -> np.ndarray:
    """lambda = exp(alpha''(t) + beta'(t) V + beta(t) U) at every node."""
    if len(V) != grid.n_nodes or len(U) != grid.n_nodes:
        raise InvalidArgumentError("fields do not match the grid")
    return np.exp(log_intensity(V, U, p, t))


def _systematic_indices(grid: SpatialGrid, n: int) -> np.ndarray:
    kx = min(math.ceil(math.sqrt(n)), grid.nx)
    ky = math.ceil(n / kx)
    if ky > grid.ny:
        kx, ky = math.ceil(n / grid.ny), grid.ny
    xs = np.rint(np.linspace(0, grid.nx - 1, kx)).astype(int)
    ys = np.rint(np.linspace(0, grid.ny - 1, ky)).astype(int)
    ii, jj = np.meshgrid(xs, ys)
    return np.column_stack([ii.ravel(), jj.ravel()])[:n]


def sample_fid(
    grid: SpatialGrid, n: int, mode: FidMode | str, rng_seed: SeedLike
) -> np.ndarray:
    """FID locations (n x 2): i.i.d. uniform over the domain or a regular sublattice."""
    if n < 1:
        raise InvalidArgumentError(f"sample size must be >= 1, got {n}")
    mode = FidMode(mode)
    if mode is FidMode.UNIFORM:
        rng = as_generator(rng_seed)
        return np.column_stack(
            [
                rng.uniform(grid.xmin, grid.xmax, n),
                rng.uniform(grid.ymin, grid.ymax, n),
            ]
        )
    if n > grid.n_interior:
        raise InvalidArgumentError(
            f"systematic design of {n} points exceeds {grid.n_interior} interior nodes"
        )
    ij = _systematic_indices(grid, n)
    nodes = [grid.node_index(int(i), int(j)) for i, j in ij]
    return np.asarray(grid.node_coords[nodes])


def sample_fdd(
    grid: SpatialGrid, lam: np.ndarray, n: int, rng_seed: SeedLike
) -> np.ndarray:
    """n distinct interior nodes drawn without replacement with probability
    proportional to lambda * cell_area."""
    interior = grid.interior_indices
    if n < 1 or n > interior.size:
        raise InvalidArgumentError(
            f"FDD sample size {n} must lie in [1, {interior.size}]"
        )
    lam = np.asarray(lam, dtype=float)
    weights = lam[interior] * grid.cell_area
    if not np.all(np.isfinite(weights)) or np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidArgumentError("intensity must be positive and finite on interior nodes")
    rng = as_generator(rng_seed)
    return rng.choice(interior, size=n, replace=False, p=weights / weights.sum())
