"""Two-part hurdle observation model with vessel catchability."""

import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import digamma, expit, gammaln, polygamma

from .errors import InvalidArgumentError, VesselLookupError
from .seeding import SeedLike, as_generator

logger = logging.getLogger(__name__)

TINY = np.finfo(float).tiny


class FixedEffects(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha_prime: float = 0.0
    alpha: float = 0.0
    theta_prime: list[float] = Field(default_factory=list)
    theta: list[float] = Field(default_factory=list)


class GammaDispersion(BaseModel):
    model_config = ConfigDict(frozen=True)

    log_upsilon: float = 0.0

    @property
    def upsilon(self) -> float:
        return float(np.exp(self.log_upsilon))


class CatchabilityModel(str, Enum):
    """How k(v) is parameterized for non-reference vessels."""

    NONE = "none"
    INTERCEPT = "intercept"
    RANDOM = "random"
    ATTRIBUTES = "attributes"

    @property
    def has_intercept(self) -> bool:
        return self is not CatchabilityModel.NONE

    @property
    def has_random_effects(self) -> bool:
        return self in (CatchabilityModel.RANDOM, CatchabilityModel.ATTRIBUTES)

    @property
    def has_attributes(self) -> bool:
        return self is CatchabilityModel.ATTRIBUTES


class Catchability(BaseModel):
    """k(v) = exp(alpha_c + attributes(v) . fixed_terms + gamma_c(v)).

    ``vessels`` lists the non-reference vessel ids in the order of ``gamma_c``.
    The reference vessel has k fixed to ``reference_value``.
    """

    model_config = ConfigDict(frozen=True)

    alpha_c: float = 0.0
    gamma_c: list[float] = Field(default_factory=list)
    log_sigma_gamma: float = 0.0
    fixed_terms: list[float] = Field(default_factory=list)
    vessels: list[int] = Field(default_factory=list)
    reference_vessel: int = 1
    reference_value: float = Field(default=1.0, gt=0)

    def vessel_position(self, v: int) -> int:
        try:
            return self.vessels.index(int(v))
        except ValueError:
            raise VesselLookupError(f"vessel {v} is not registered") from None


def presence_prob(linear_predictor):
    return expit(linear_predictor)


def mean_biomass(linear_predictor):
    return np.exp(linear_predictor)


def gamma_shape_scale(zeta, upsilon):
    """Shape zeta^2 / upsilon^2 and scale upsilon^2 / zeta."""
    zeta = np.asarray(zeta, dtype=float)
    upsilon = np.asarray(upsilon, dtype=float)
    if np.any(zeta <= 0) or np.any(upsilon <= 0):
        raise InvalidArgumentError("gamma mean and standard deviation must be positive")
    v2 = upsilon * upsilon
    return (zeta * zeta / v2)[()], (v2 / zeta)[()]


def catchability(
    v: int,
    c: Catchability,
    attributes: dict[int, np.ndarray] | None = None,
) -> float:
    if int(v) == c.reference_vessel:
        return c.reference_value
    pos = c.vessel_position(v)
    eta = c.alpha_c
    if c.gamma_c:
        eta += c.gamma_c[pos]
    if c.fixed_terms:
        if attributes is None or int(v) not in attributes:
            raise VesselLookupError(f"vessel {v} has no attribute row")
        eta += float(np.dot(attributes[int(v)], c.fixed_terms))
    return float(np.exp(eta))


def simulate_observations(pi, zeta, upsilon: float, rng_seed: SeedLike):
    """Draw (z, y); absences carry y = 0, presences y > 0."""
    pi = np.asarray(pi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if np.any((pi < 0) | (pi > 1)):
        raise InvalidArgumentError("presence probabilities must lie in [0, 1]")
    rng = as_generator(rng_seed)
    z = (rng.random(pi.shape) < pi).astype(int)
    shape, scale = gamma_shape_scale(zeta, upsilon)
    draws = rng.gamma(shape, scale)
    clamped = int(np.sum((draws < TINY) & (z == 1)))
    if clamped:
        logger.debug("clamped %d underflowing gamma draws to the smallest double", clamped)
    y = np.where(z == 1, np.maximum(draws, TINY), 0.0)
    return z, y


def hurdle_moments(pi, mean_y):
    """E[S] = E[Z] E[Y]."""
    return np.asarray(pi, dtype=float) * np.asarray(mean_y, dtype=float)


def hurdle_variance(pi, zeta, upsilon):
    pi = np.asarray(pi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    return pi * (upsilon**2 + zeta**2) - (pi * zeta) ** 2


def gamma_loglik_derivatives(y, eta, upsilon: float):
    """Gamma log-density with mean exp(eta) and sd upsilon, and its first two
    derivatives in eta."""
    y = np.asarray(y, dtype=float)
    zeta = np.exp(eta)
    a = zeta * zeta / upsilon**2
    log_b = 2.0 * np.log(upsilon) - eta
    y_over_b = y * zeta / upsilon**2
    log_y = np.log(y)
    value = (a - 1.0) * log_y - y_over_b - a * log_b - gammaln(a)
    resid = log_y - log_b - digamma(a)
    first = 2.0 * a * resid + a - y_over_b
    second = 4.0 * a * resid + 4.0 * a - 4.0 * a * a * polygamma(1, a) - y_over_b
    return value, first, second
