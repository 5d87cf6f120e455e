"""Simulation-study scenario presets."""

import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidArgumentError
from .fields import MaternInterpretable
from .grid import SpatialGrid, build_grid
from .sampling import FidMode, PreferentialParams
from .seeding import SeedLike, as_generator

logger = logging.getLogger(__name__)

# Sample-size combinations (n_fid, n_fdd) per time.
COMBS: dict[str, tuple[int, int]] = {
    "1": (100, 100),
    "2": (100, 200),
    "3": (100, 500),
    "4": (200, 100),
}

# Biomass coefficients by source; the two disagree on the first coefficient.
THETA_BY_SOURCE = {"figure": [1.0, -0.5], "text": [3.0, -0.5]}


class Target(str, Enum):
    PRESENCE = "presence"
    BIOMASS = "biomass"


class NormalDraw(BaseModel):
    """Normal(mean, sd) for a per-time preferential loading; sd 0 means fixed."""

    model_config = ConfigDict(frozen=True)

    mean: float = 0.0
    sd: float = Field(default=0.0, ge=0)

    def draw(self, rng: np.random.Generator, T: int) -> list[float]:
        if self.sd == 0:
            return [float(self.mean)] * T
        return [float(v) for v in rng.normal(self.mean, self.sd, T)]


class CovariateField(BaseModel):
    """A simulated covariate: a Matérn GMRF with range phi and variance sigma2."""

    model_config = ConfigDict(frozen=True)

    name: str
    target: Target
    phi: float = Field(gt=0)
    sigma2: float = Field(gt=0)

    @property
    def matern(self) -> MaternInterpretable:
        return MaternInterpretable.from_variance(self.phi, self.sigma2)


class FieldTruth(BaseModel):
    model_config = ConfigDict(frozen=True)

    phi: float = Field(gt=0)
    sigma2: float = Field(gt=0)

    @property
    def matern(self) -> MaternInterpretable:
        return MaternInterpretable.from_variance(self.phi, self.sigma2)


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int = 60
    ny: int = 60
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    pad_fraction: float = 0.2
    mesh_subsample: int = Field(default=1, ge=1)

    def build(self) -> SpatialGrid:
        return build_grid(self.nx, self.ny, self.bounds, self.pad_fraction)

    def build_mesh(self) -> SpatialGrid:
        return self.build().coarsen(self.mesh_subsample)


class ScenarioConfig(BaseModel):
    """Everything needed to simulate and refit one scenario x combination."""

    model_config = ConfigDict(frozen=True)

    scenario: int
    T: int = Field(ge=1)
    beta_prime_dist: NormalDraw
    beta_dist: NormalDraw
    beta_prime: list[float]
    beta: list[float]
    alpha_pp: list[float]
    n_fid: int = Field(ge=1)
    n_fdd: int = Field(ge=1)
    grid: GridSpec = GridSpec()
    covariates: list[CovariateField]
    field_u: FieldTruth = FieldTruth(phi=0.20, sigma2=1.00)
    field_v: FieldTruth = FieldTruth(phi=0.15, sigma2=0.80)
    field_w: FieldTruth = FieldTruth(phi=0.20, sigma2=1.00)
    delta: float = Field(default=0.8, gt=-1, lt=1)
    alpha: float = 0.0
    alpha_prime: float = 0.0
    theta_prime: list[float] = [-1.0, 1.5]
    theta: list[float] = [1.0, -0.5]
    theta_source: str = "figure"
    upsilon: float = Field(default=1.0, gt=0)
    fid_mode: FidMode = FidMode.UNIFORM
    replicates: int = Field(default=100, ge=1)
    master_seed: int = 42

    @model_validator(mode="after")
    def _check(self) -> "ScenarioConfig":
        for name in ("beta_prime", "beta", "alpha_pp"):
            if len(getattr(self, name)) != self.T:
                raise ValueError(f"{name} must have length T={self.T}")
        n_presence = sum(c.target is Target.PRESENCE for c in self.covariates)
        n_biomass = sum(c.target is Target.BIOMASS for c in self.covariates)
        if n_presence != len(self.theta_prime) or n_biomass != len(self.theta):
            raise ValueError("coefficient lengths must match the covariate design widths")
        return self

    @property
    def preferential(self) -> PreferentialParams:
        return PreferentialParams(
            alpha_pp=self.alpha_pp, beta_prime=self.beta_prime, beta=self.beta
        )

    def presence_covariates(self) -> list[CovariateField]:
        return [c for c in self.covariates if c.target is Target.PRESENCE]

    def biomass_covariates(self) -> list[CovariateField]:
        return [c for c in self.covariates if c.target is Target.BIOMASS]

    def for_replicate(self, rng_seed: SeedLike) -> "ScenarioConfig":
        """Copy with the per-time loadings redrawn for one replicate."""
        beta_prime, beta = draw_loadings(self.beta_prime_dist, self.beta_dist, self.T, rng_seed)
        return self.model_copy(update={"beta_prime": beta_prime, "beta": beta})


_LOADINGS: dict[int, tuple[NormalDraw, NormalDraw]] = {
    1: (NormalDraw(), NormalDraw(mean=2.0, sd=0.5)),
    2: (NormalDraw(mean=2.0, sd=0.5), NormalDraw()),
    3: (NormalDraw(mean=1.0, sd=0.5), NormalDraw(mean=2.0, sd=0.5)),
}

_COVARIATES = [
    CovariateField(name="c_presence_1", target=Target.PRESENCE, phi=0.25, sigma2=1.5),
    CovariateField(name="c_presence_2", target=Target.PRESENCE, phi=0.20, sigma2=1.0),
    CovariateField(name="c_biomass_1", target=Target.BIOMASS, phi=0.30, sigma2=1.75),
    CovariateField(name="c_biomass_2", target=Target.BIOMASS, phi=0.15, sigma2=2.0),
]


def draw_loadings(
    beta_prime_dist: NormalDraw, beta_dist: NormalDraw, T: int, rng_seed: SeedLike
) -> tuple[list[float], list[float]]:
    rng = as_generator(rng_seed)
    beta_prime = beta_prime_dist.draw(rng, T)
    beta = beta_dist.draw(rng, T)
    return beta_prime, beta


def scenario_preset(
    id: int,
    T: int = 4,
    rng_seed: SeedLike = 42,
    comb: tuple[int, int] = (100, 100),
    theta_source: str = "figure",
    replicates: int = 100,
    grid: GridSpec | None = None,
) -> ScenarioConfig:
    """Scenario 1 (PS on U), 2 (PS on V) or 3 (PS on both)."""
    if id not in _LOADINGS:
        raise InvalidArgumentError(f"unknown scenario {id}; expected 1, 2 or 3")
    if theta_source not in THETA_BY_SOURCE:
        raise InvalidArgumentError(f"theta_source must be one of {sorted(THETA_BY_SOURCE)}")
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    beta_prime_dist, beta_dist = _LOADINGS[id]
    beta_prime, beta = draw_loadings(beta_prime_dist, beta_dist, T, rng_seed)
    return ScenarioConfig(
        scenario=id,
        T=T,
        beta_prime_dist=beta_prime_dist,
        beta_dist=beta_dist,
        beta_prime=beta_prime,
        beta=beta,
        alpha_pp=[0.0] * T,
        n_fid=comb[0],
        n_fdd=comb[1],
        grid=grid or GridSpec(),
        covariates=list(_COVARIATES),
        theta=list(THETA_BY_SOURCE[theta_source]),
        theta_source=theta_source,
        replicates=replicates,
        master_seed=rng_seed if isinstance(rng_seed, int) else 42,
    )
