"""Component log-likelihoods and the joint objective over the latent vector.

The latent vector is ``x = (U, V, W_1, ..., W_T, gamma_c)`` on the inference
mesh. Observation rows reach the fields through the bilinear projection, so
survey points anywhere in the domain and commercial points on nodes are
handled alike.
"""

import json
import logging
import math
from collections.abc import Callable

import numpy as np
from scipy import sparse
from scipy.special import expit, gammaln, xlog1py, xlogy

from connectors.data.covariates import DesignMatrices
from connectors.data.observations import ObservationSet

from .errors import ComponentError, InvalidArgumentError, PrefsimError
from .factor import SparseFactor
from .fields import LatentState, ar1_precision, spde_precision
from .grid import SpatialGrid, TimeAxis, project
from .hurdle import gamma_loglik_derivatives, gamma_shape_scale
from .params import Family, JointParams, ModelSpec

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def ll_gamma(y, zeta, upsilon) -> float:
    """Sum of Gamma(shape zeta^2/upsilon^2, scale upsilon^2/zeta) log-densities."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise InvalidArgumentError("gamma likelihood needs y > 0; filter absences first")
    a, b = gamma_shape_scale(zeta, upsilon)
    return float(np.sum((a - 1.0) * np.log(y) - y / b - a * np.log(b) - gammaln(a)))


def ll_bernoulli(z, pi) -> float:
    z = np.asarray(z, dtype=float)
    pi = np.asarray(pi, dtype=float)
    return float(np.sum(xlogy(z, pi) + xlog1py(1.0 - z, -pi)))


def ll_ipp(locations, lam, grid: SpatialGrid) -> float:
    """sum log lambda(x_i) - integral of lambda, the integral by node quadrature."""
    lam = np.asarray(lam, dtype=float)
    idx = np.asarray(locations, dtype=int)
    return float(np.sum(np.log(lam[idx])) - np.dot(grid.quadrature_weights, lam))


def ll_gmrf(f, Q, factor: SparseFactor | None = None) -> float:
    f = np.asarray(f, dtype=float)
    factor = factor or SparseFactor(Q)
    n = f.shape[0]
    return float(-0.5 * n * LOG_2PI + 0.5 * factor.logdet - 0.5 * f @ (Q @ f))


def ll_ar1_field(W, Q_xi, delta: float, factor: SparseFactor | None = None) -> float:
    """Log-density of the stationary AR(1) field with GMRF(Q_xi) innovations."""
    if not abs(delta) < 1:
        raise InvalidArgumentError(f"temporal correlation must lie in (-1, 1), got {delta}")
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    n, T = W.shape
    factor = factor or SparseFactor(Q_xi)
    one_minus = 1.0 - delta * delta
    quad = one_minus * (W[:, 0] @ (Q_xi @ W[:, 0]))
    for t in range(1, T):
        e = W[:, t] - delta * W[:, t - 1]
        quad += e @ (Q_xi @ e)
    return float(
        -0.5 * n * T * LOG_2PI + 0.5 * n * math.log(one_minus) + 0.5 * T * factor.logdet - 0.5 * quad
    )


def ll_random_effects(gamma, sigma: float) -> float:
    gamma = np.asarray(gamma, dtype=float)
    k = gamma.shape[0]
    return float(-0.5 * k * LOG_2PI - k * math.log(sigma) - 0.5 * gamma @ gamma / sigma**2)


class ModelData:
    """Observation rows linked to a mesh: projections, designs and vessel maps.

    Depends only on data and model structure, so one instance serves every
    parameter point of a fit.
    """

    def __init__(
        self,
        obs: ObservationSet,
        mesh: SpatialGrid,
        time_axis: TimeAxis,
        spec: ModelSpec | None = None,
        design: DesignMatrices | None = None,
        vessel_attributes: np.ndarray | None = None,
        vessel_ids: list[int] | None = None,
        reference_vessel: int = 1,
        reference_value: float = 1.0,
    ):
        self.spec = spec or ModelSpec()
        keep = np.zeros(len(obs), dtype=bool)
        if self.spec.use_fid:
            keep |= obs.is_fid
        if self.spec.use_fdd:
            keep |= obs.is_fdd
        self.obs = obs.subset(keep) if not keep.all() else obs
        self.mesh = mesh
        self.time_axis = time_axis
        self.n = mesh.n_nodes
        self.T = time_axis.T
        self.m = len(self.obs)

        if design is None:
            design = DesignMatrices(
                presence=np.zeros((len(obs), 0)), biomass=np.zeros((len(obs), 0)),
                presence_columns=[], biomass_columns=[],
            )
        design = design.identifiable()
        self.design = design
        self.X_presence = design.presence[keep]
        self.X_biomass = design.biomass[keep]

        self.A = project(mesh, self.obs.locations).matrix
        self.t_idx = self.obs.time_index(time_axis)
        self.z = self.obs.z.astype(float)
        self.y = self.obs.y
        self.positive = self.z > 0
        self.is_fdd = self.obs.is_fdd

        vessels = self.obs.vessels
        self.reference_vessel = reference_vessel
        self.log_reference = math.log(reference_value)
        self.is_reference = vessels == reference_vessel
        cm = self.spec.catchability
        ids = sorted({int(v) for v in vessels if v != reference_vessel})
        if vessel_ids is not None:
            ids = [int(v) for v in vessel_ids if v != reference_vessel]
        self.vessel_ids = ids
        lookup = {v: k for k, v in enumerate(ids)}
        self.vessel_pos = np.array(
            [-1 if r else lookup[int(v)] for v, r in zip(vessels, self.is_reference)], dtype=int
        )
        self.n_gamma = len(ids) if cm.has_random_effects else 0
        self.F = None
        if cm.has_attributes:
            if vessel_attributes is None:
                raise InvalidArgumentError("attribute catchability needs a vessel design")
            self.F = np.asarray(vessel_attributes, dtype=float)
        self.n_latent = (2 + self.T) * self.n + self.n_gamma

        self.M_presence, self.M_biomass = self._latent_maps()

        self.weights = mesh.quadrature_weights
        self.fdd_counts = np.zeros(self.T, dtype=int)
        self.fdd_sums = np.zeros((self.T, self.n))
        if self.spec.has_ipp:
            for t in range(self.T):
                rows = np.flatnonzero(self.is_fdd & (self.t_idx == t))
                self.fdd_counts[t] = rows.size
                if rows.size:
                    self.fdd_sums[t] = np.asarray(self.A[rows].sum(axis=0)).ravel()

    def _latent_maps(self) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        n, T, m = self.n, self.T, self.m
        A = self.A.tocoo()
        w_cols = 2 * n + self.t_idx[A.row] * n + A.col
        w_block = sparse.csr_matrix((A.data, (A.row, w_cols)), shape=(m, self.n_latent))
        u_block = sparse.csr_matrix((A.data, (A.row, A.col)), shape=(m, self.n_latent))
        v_block = sparse.csr_matrix((A.data, (A.row, n + A.col)), shape=(m, self.n_latent))
        presence = (v_block + w_block).tocsr()
        biomass = u_block + w_block
        if self.n_gamma:
            rows = np.flatnonzero(self.vessel_pos >= 0)
            cols = (2 + T) * n + self.vessel_pos[rows]
            biomass = biomass + sparse.csr_matrix(
                (np.ones(rows.size), (rows, cols)), shape=(m, self.n_latent)
            )
        return presence, biomass.tocsr()

    @property
    def n_theta_prime(self) -> int:
        return self.X_presence.shape[1]

    @property
    def n_theta(self) -> int:
        return self.X_biomass.shape[1]

    @property
    def n_theta_c(self) -> int:
        return 0 if self.F is None else self.F.shape[1]

    @property
    def has_dispersion(self) -> bool:
        if self.spec.family is Family.GAUSSIAN:
            return self.m > 0
        return bool(self.positive.any())

    def fdd_counts_by_time(self) -> np.ndarray:
        """FDD rows per time regardless of whether the IPP term is active."""
        return np.bincount(self.t_idx[self.is_fdd], minlength=self.T)


def as_model_data(data, grid: SpatialGrid, time_axis: TimeAxis, spec: ModelSpec | None) -> ModelData:
    if isinstance(data, ModelData):
        return data
    return ModelData(data, grid, time_axis, spec=spec)


class JointObjective:
    """Negative joint log-likelihood of data and latent fields at fixed parameters."""

    def __init__(self, params: JointParams, data: ModelData, debug: bool = False):
        self.params = params
        self.data = data
        self.debug = debug
        mesh, T = data.mesh, data.T
        if params.T != T:
            raise InvalidArgumentError(f"parameters are for T={params.T}, data has T={T}")
        if len(params.fixed.theta_prime) != data.n_theta_prime or len(params.fixed.theta) != data.n_theta:
            raise InvalidArgumentError("coefficient lengths do not match the design widths")

        self.q_u = self._tagged("field_U", lambda: spde_precision(mesh, params.u))
        self.f_u = self._tagged("field_U", lambda: SparseFactor(self.q_u, kappa=params.u.kappa, tau=params.u.tau))
        self.q_v = self._tagged("field_V", lambda: spde_precision(mesh, params.v))
        self.f_v = self._tagged("field_V", lambda: SparseFactor(self.q_v, kappa=params.v.kappa, tau=params.v.tau))
        self.q_xi = self._tagged("field_W", lambda: spde_precision(mesh, params.w))
        self.f_xi = self._tagged("field_W", lambda: SparseFactor(self.q_xi, kappa=params.w.kappa, tau=params.w.tau))
        self.delta = params.temporal.delta
        if not abs(self.delta) < 1:
            raise ComponentError("field_W", InvalidArgumentError("temporal correlation saturated"))
        self.q_w = ar1_precision(self.q_xi, self.delta, T)

        self.sigma_gamma = math.exp(params.catchability.log_sigma_gamma)
        blocks = [self.q_u, self.q_v, self.q_w]
        if data.n_gamma:
            blocks.append(sparse.identity(data.n_gamma) / self.sigma_gamma**2)
        self.q_prior = sparse.block_diag(blocks, format="csr")

        fx = params.fixed
        self.offset_presence = fx.alpha_prime + data.X_presence @ np.asarray(fx.theta_prime, dtype=float)
        offset = fx.alpha + data.X_biomass @ np.asarray(fx.theta, dtype=float)
        cm = data.spec.catchability
        catch = np.where(data.is_reference, data.log_reference, 0.0)
        if cm.has_intercept:
            catch = catch + np.where(data.is_reference, 0.0, params.catchability.alpha_c)
        if cm.has_attributes and data.F is not None:
            theta_c = np.asarray(params.catchability.fixed_terms, dtype=float)
            per_vessel = data.F @ theta_c
            rows = data.vessel_pos >= 0
            catch = catch.copy()
            catch[rows] += per_vessel[data.vessel_pos[rows]]
        self.offset_biomass = offset + catch
        self.upsilon = params.dispersion.upsilon
        self.pref = params.preferential

    @staticmethod
    def _tagged(component: str, fn: Callable):
        try:
            return fn()
        except ComponentError:
            raise
        except PrefsimError as e:
            raise ComponentError(component, e) from e

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n, T = self.data.n, self.data.T
        return x[:n], x[n : 2 * n], x[2 * n : (2 + T) * n], x[(2 + T) * n :]

    def predictors(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Presence (logit) and biomass (log) linear predictors for every row."""
        return (
            self.offset_presence + self.data.M_presence @ x,
            self.offset_biomass + self.data.M_biomass @ x,
        )

    def components(self, x: np.ndarray) -> dict[str, float]:
        """Log-likelihood of every component at latent vector ``x``."""
        d = self.data
        u, v, w, gamma = self.split(x)
        eta_p, eta_b = self.predictors(x)
        out: dict[str, float] = {}
        if d.spec.family is Family.HURDLE:
            out["presence"] = self._tagged(
                "presence", lambda: float(np.sum(d.z * eta_p - np.logaddexp(0.0, eta_p)))
            )
            pos = d.positive
            out["biomass"] = self._tagged(
                "biomass",
                lambda: float(np.sum(gamma_loglik_derivatives(d.y[pos], eta_b[pos], self.upsilon)[0]))
                if pos.any() else 0.0,
            )
        else:
            out["gaussian"] = self._tagged("gaussian", lambda: self._gaussian(eta_b)[0])
        if d.spec.has_ipp:
            out["point_process"] = self._tagged("point_process", lambda: self._ipp(u, v)[0])
        out["field_U"] = self._tagged("field_U", lambda: ll_gmrf(u, self.q_u, self.f_u))
        out["field_V"] = self._tagged("field_V", lambda: ll_gmrf(v, self.q_v, self.f_v))
        out["field_W"] = self._tagged(
            "field_W",
            lambda: ll_ar1_field(w.reshape(d.T, d.n).T, self.q_xi, self.delta, self.f_xi),
        )
        if d.n_gamma:
            out["vessel_effects"] = self._tagged(
                "vessel_effects", lambda: ll_random_effects(gamma, self.sigma_gamma)
            )
        return out

    def value(self, x: np.ndarray) -> float:
        components = self.components(x)
        if self.debug:
            logger.debug(json.dumps(component_record(components)))
        return -float(sum(components.values()))

    def _gaussian(self, eta_b: np.ndarray):
        r = self.data.y - eta_b
        s2 = self.upsilon**2
        value = float(np.sum(-0.5 * math.log(2.0 * math.pi * s2) - 0.5 * r * r / s2))
        return value, r / s2, np.full(r.shape, 1.0 / s2)

    def _ipp(self, u: np.ndarray, v: np.ndarray):
        """Value, U/V gradients and per-time curvature weights of the point-process term."""
        d, p = self.data, self.pref
        value = 0.0
        grad_u = np.zeros(d.n)
        grad_v = np.zeros(d.n)
        curv = []
        for t in range(d.T):
            a, bp, b = p.alpha_pp[t], p.beta_prime[t], p.beta[t]
            lam_w = d.weights * np.exp(a + b * u + bp * v)
            s = d.fdd_sums[t]
            value += d.fdd_counts[t] * a + b * (s @ u) + bp * (s @ v) - lam_w.sum()
            grad_u += b * (s - lam_w)
            grad_v += bp * (s - lam_w)
            curv.append((b, bp, lam_w))
        return value, grad_u, grad_v, curv

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the negative joint log-likelihood."""
        d = self.data
        u, v, _, _ = self.split(x)
        eta_p, eta_b = self.predictors(x)
        g = np.zeros(d.n_latent)
        if d.spec.family is Family.HURDLE:
            g += d.M_presence.T @ (d.z - expit(eta_p))
            pos = d.positive
            if pos.any():
                _, first, _ = gamma_loglik_derivatives(d.y[pos], eta_b[pos], self.upsilon)
                g += d.M_biomass[pos].T @ first
        else:
            g += d.M_biomass.T @ self._gaussian(eta_b)[1]
        if d.spec.has_ipp:
            _, gu, gv, _ = self._ipp(u, v)
            g[: d.n] += gu
            g[d.n : 2 * d.n] += gv
        g -= self.q_prior @ x
        return -g

    def negative_hessian(self, x: np.ndarray) -> sparse.csc_matrix:
        """Hessian of the negative joint log-likelihood (sparse, symmetric)."""
        d = self.data
        u, v, _, _ = self.split(x)
        eta_p, eta_b = self.predictors(x)
        h = self.q_prior.copy()
        if d.spec.family is Family.HURDLE:
            p = expit(eta_p)
            h = h + d.M_presence.T @ sparse.diags(p * (1.0 - p)) @ d.M_presence
            pos = d.positive
            if pos.any():
                _, _, second = gamma_loglik_derivatives(d.y[pos], eta_b[pos], self.upsilon)
                mb = d.M_biomass[pos]
                h = h + mb.T @ sparse.diags(-second) @ mb
        else:
            mb = d.M_biomass
            h = h + mb.T @ sparse.diags(self._gaussian(eta_b)[2]) @ mb
        if d.spec.has_ipp:
            _, _, _, curv = self._ipp(u, v)
            n = d.n
            diag_uu = np.zeros(n)
            diag_uv = np.zeros(n)
            diag_vv = np.zeros(n)
            for b, bp, lam_w in curv:
                diag_uu += b * b * lam_w
                diag_uv += b * bp * lam_w
                diag_vv += bp * bp * lam_w
            idx = np.arange(n)
            rows = np.concatenate([idx, idx + n, idx, idx + n])
            cols = np.concatenate([idx, idx + n, idx + n, idx])
            vals = np.concatenate([diag_uu, diag_vv, diag_uv, diag_uv])
            h = h + sparse.csr_matrix((vals, (rows, cols)), shape=(d.n_latent, d.n_latent))
        return sparse.csc_matrix(h)


def joint_nll(
    params: JointParams,
    latent: LatentState,
    data: ModelData | ObservationSet,
    grid: SpatialGrid,
    time_axis: TimeAxis,
    spec: ModelSpec | None = None,
    debug: bool = False,
) -> float | tuple[float, dict[str, float]]:
    """Negative joint log-likelihood.

    With ``debug`` the per-component record is logged as JSON and returned
    alongside the total.
    """
    model_data = as_model_data(data, grid, time_axis, spec)
    objective = JointObjective(params, model_data)
    components = objective.components(latent.to_vector())
    total = -float(sum(components.values()))
    if not debug:
        return total
    record = component_record(components)
    logger.info(json.dumps(record))
    return total, record


def component_record(components: dict[str, float]) -> dict[str, float]:
    record = dict(components)
    record["total"] = -float(sum(components.values()))
    return record
