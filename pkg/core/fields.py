"""Matérn (nu = 1) SPDE precisions, GMRF sampling and the AR(1) space-time field."""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse

from .errors import InvalidArgumentError
from .factor import SparseFactor
from .grid import SpatialGrid
from .seeding import SeedLike, as_generator

logger = logging.getLogger(__name__)

SQRT_8 = math.sqrt(8.0)
SQRT_4PI = math.sqrt(4.0 * math.pi)


class MaternInternal(BaseModel):
    """Optimizer-scale Matérn parameters (log kappa, log tau), nu fixed at 1."""

    model_config = ConfigDict(frozen=True)

    log_kappa: float
    log_tau: float
    nu: int = Field(default=1, ge=1, le=1)

    @property
    def kappa(self) -> float:
        return math.exp(self.log_kappa)

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)


class MaternInterpretable(BaseModel):
    """Range phi and marginal standard deviation sigma."""

    model_config = ConfigDict(frozen=True)

    phi: float = Field(gt=0)
    sigma: float = Field(gt=0)

    @classmethod
    def from_variance(cls, phi: float, sigma2: float) -> "MaternInterpretable":
        return cls(phi=phi, sigma=math.sqrt(sigma2))

    @property
    def variance(self) -> float:
        return self.sigma**2


def to_interpretable(p: MaternInternal) -> MaternInterpretable:
    kappa, tau = p.kappa, p.tau
    return MaternInterpretable(phi=SQRT_8 / kappa, sigma=1.0 / (kappa * tau * SQRT_4PI))


def to_internal(p: MaternInterpretable) -> MaternInternal:
    log_kappa = math.log(SQRT_8) - math.log(p.phi)
    log_tau = -log_kappa - math.log(p.sigma) - math.log(SQRT_4PI)
    return MaternInternal(log_kappa=log_kappa, log_tau=log_tau)


def delta_from_star(delta_star):
    """2 * logistic(delta_star) - 1, written as tanh(delta_star / 2)."""
    return np.tanh(np.asarray(delta_star, dtype=float) / 2.0)[()]


def delta_to_star(delta):
    delta = np.asarray(delta, dtype=float)
    if np.any(np.abs(delta) >= 1):
        raise InvalidArgumentError(f"temporal correlation must lie in (-1, 1), got {delta}")
    return (2.0 * np.arctanh(delta))[()]


class TemporalCorr(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta_star: float

    @classmethod
    def from_delta(cls, delta: float) -> "TemporalCorr":
        return cls(delta_star=float(delta_to_star(delta)))

    @property
    def delta(self) -> float:
        return float(delta_from_star(self.delta_star))


class FieldParams(BaseModel):
    """Covariance hyperparameters of U, V and the space-time field W."""

    model_config = ConfigDict(frozen=True)

    u: MaternInternal
    v: MaternInternal
    w: MaternInternal
    temporal: TemporalCorr

    def interpretable(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name, p in (("U", self.u), ("V", self.v), ("W", self.w)):
            q = to_interpretable(p)
            out[f"phi_{name}"] = q.phi
            out[f"sigma_{name}"] = q.sigma
        out["delta"] = self.temporal.delta
        return out


class LatentState(BaseModel):
    """Values of U, V at nodes, W at nodes x times, and vessel effects gamma."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    gamma: np.ndarray = Field(default_factory=lambda: np.zeros(0))

    @model_validator(mode="after")
    def _check(self) -> "LatentState":
        n = self.U.shape[0]
        if self.V.shape != (n,) or self.W.ndim != 2 or self.W.shape[0] != n:
            raise ValueError(
                f"latent shapes disagree: U {self.U.shape}, V {self.V.shape}, W {self.W.shape}"
            )
        for name in ("U", "V", "W", "gamma"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"latent field {name} has non-finite values")
        return self

    @property
    def n_nodes(self) -> int:
        return self.U.shape[0]

    @property
    def T(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, n_nodes: int, T: int, n_gamma: int = 0) -> "LatentState":
        return cls(
            U=np.zeros(n_nodes), V=np.zeros(n_nodes), W=np.zeros((n_nodes, T)),
            gamma=np.zeros(n_gamma),
        )

    def to_vector(self) -> np.ndarray:
        """Stack as (U, V, W_1..W_T, gamma)."""
        return np.concatenate([self.U, self.V, self.W.T.ravel(), self.gamma])

    @classmethod
    def from_vector(cls, x: np.ndarray, n_nodes: int, T: int) -> "LatentState":
        n = n_nodes
        x = np.asarray(x, dtype=float)
        return cls(
            U=x[:n].copy(),
            V=x[n : 2 * n].copy(),
            W=x[2 * n : (2 + T) * n].reshape(T, n).T.copy(),
            gamma=x[(2 + T) * n :].copy(),
        )


def _neumann_second_difference(m: int) -> sparse.csr_matrix:
    if m == 1:
        return sparse.csr_matrix((1, 1))
    main = np.full(m, 2.0)
    main[[0, -1]] = 1.0
    off = -np.ones(m - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def stiffness_matrix(grid: SpatialGrid) -> sparse.csr_matrix:
    """5-point stiffness G on the padded lattice with Neumann boundaries."""
    dx = _neumann_second_difference(grid.full_nx)
    dy = _neumann_second_difference(grid.full_ny)
    g = (grid.hy / grid.hx) * sparse.kron(sparse.identity(grid.full_ny), dx) + (
        grid.hx / grid.hy
    ) * sparse.kron(dy, sparse.identity(grid.full_nx))
    return g.tocsr()


def spde_precision(grid: SpatialGrid, p: MaternInternal) -> sparse.csr_matrix:
    """Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G) with lumped C = cell_area * I."""
    kappa2 = math.exp(2.0 * p.log_kappa)
    tau2 = math.exp(2.0 * p.log_tau)
    c = grid.cell_area
    g = stiffness_matrix(grid)
    q = kappa2 * kappa2 * c * sparse.identity(grid.n_nodes, format="csr")
    q = q + 2.0 * kappa2 * g + (g @ g) / c
    q = (tau2 * q).tocsr()
    # exact symmetry
    q = ((q + q.T) * 0.5).tocsr()
    q.sum_duplicates()
    q.sort_indices()
    return q


def temporal_precision(delta: float, T: int) -> sparse.csr_matrix:
    """AR(1) precision R such that the space-time precision is kron(R, Q_xi)."""
    if abs(delta) >= 1:
        raise InvalidArgumentError(f"temporal correlation must lie in (-1, 1), got {delta}")
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    if T == 1:
        return sparse.csr_matrix(np.array([[1.0 - delta * delta]]))
    main = np.full(T, 1.0 + delta * delta)
    main[[0, -1]] = 1.0
    off = np.full(T - 1, -delta)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def ar1_precision(q_xi: sparse.spmatrix, delta: float, T: int) -> sparse.csr_matrix:
    """Precision of the time-major stacked field (W_1, ..., W_T)."""
    return sparse.kron(temporal_precision(delta, T), q_xi, format="csr")


def sample_gmrf(
    Q: sparse.spmatrix,
    rng_seed: SeedLike,
    size: int | None = None,
    factor: SparseFactor | None = None,
) -> np.ndarray:
    """Draw from N(0, Q^-1); ``size`` draws are returned as columns."""
    factor = factor or SparseFactor(Q)
    rng = as_generator(rng_seed)
    shape = (factor.n,) if size is None else (factor.n, size)
    return factor.sample(rng.standard_normal(shape))


def sample_ar1_spatiotemporal(
    Q_xi: sparse.spmatrix,
    delta: float,
    T: int,
    rng_seed: SeedLike,
    factor: SparseFactor | None = None,
) -> np.ndarray:
    """Stationary AR(1) in time with GMRF(Q_xi) innovations; nodes x T."""
    if not abs(delta) < 1:
        raise InvalidArgumentError(f"temporal correlation must lie in (-1, 1), got {delta}")
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    factor = factor or SparseFactor(Q_xi)
    rng = as_generator(rng_seed)
    xi = factor.sample(rng.standard_normal((factor.n, T)))
    w = np.empty_like(xi)
    w[:, 0] = xi[:, 0] / math.sqrt(1.0 - delta * delta)
    for t in range(1, T):
        w[:, t] = delta * w[:, t - 1] + xi[:, t]
    return w
