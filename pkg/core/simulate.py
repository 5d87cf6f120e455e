"""One simulated replicate: truth fields, both data sources and truth surfaces."""

import logging
import math

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from connectors.data.covariates import CovariateSpec, DesignMatrices, design_from_frame
from connectors.data.observations import COLUMNS, ObservationSet, Source

from .fields import (
    TemporalCorr,
    sample_ar1_spatiotemporal,
    sample_gmrf,
    spde_precision,
    to_internal,
)
from .grid import SpatialGrid, TimeAxis, project
from .hurdle import (
    Catchability,
    FixedEffects,
    GammaDispersion,
    mean_biomass,
    presence_prob,
    simulate_observations,
)
from .params import JointParams
from .sampling import intensity_surface, sample_fdd, sample_fid
from .scenarios import ScenarioConfig
from .seeding import stream_rng, stream_seed

logger = logging.getLogger(__name__)

FID_VESSEL = 1
FDD_VESSEL = 2


class SimulatedReplicate(BaseModel):
    """Realized truth and observations of replicate ``replicate``."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config: ScenarioConfig
    replicate: int
    grid: SpatialGrid
    time_axis: TimeAxis
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    covariates: np.ndarray
    observations: ObservationSet
    truth_pi: np.ndarray
    truth_mu: np.ndarray

    @property
    def truth_surface(self) -> np.ndarray:
        """E[S] = pi * mu at interior nodes (interior nodes x T)."""
        return self.truth_pi * self.truth_mu

    def covariate_specs(self) -> list[CovariateSpec]:
        return [
            CovariateSpec(name=c.name, targets=[c.target.value]) for c in self.config.covariates
        ]

    def design(self) -> DesignMatrices:
        return design_from_frame(self.observations.frame, self.covariate_specs())

    def node_designs(self) -> tuple[np.ndarray, np.ndarray]:
        """Covariate values at interior nodes for the presence and biomass predictors."""
        interior = self.grid.interior_indices
        names = [c.name for c in self.config.covariates]
        columns = {name: self.covariates[interior, k] for k, name in enumerate(names)}
        presence = [columns[c.name] for c in self.config.presence_covariates()]
        biomass = [columns[c.name] for c in self.config.biomass_covariates()]
        n = interior.size
        return (
            np.column_stack(presence) if presence else np.zeros((n, 0)),
            np.column_stack(biomass) if biomass else np.zeros((n, 0)),
        )

    def truth_values(self) -> dict[str, float]:
        """True outer parameters on the scales the replicate records use."""
        c = self.config
        out: dict[str, float] = {"alpha_prime": c.alpha_prime, "alpha": c.alpha, "delta": c.delta}
        for j, v in enumerate(c.theta_prime):
            out[f"theta_prime[{j + 1}]"] = v
        for j, v in enumerate(c.theta):
            out[f"theta[{j + 1}]"] = v
        for t in range(c.T):
            out[f"alpha_pp[{t + 1}]"] = c.alpha_pp[t]
            out[f"beta_prime[{t + 1}]"] = c.beta_prime[t]
            out[f"beta[{t + 1}]"] = c.beta[t]
        for field, truth in (("U", c.field_u), ("V", c.field_v), ("W", c.field_w)):
            out[f"phi_{field}"] = truth.phi
            out[f"sigma2_{field}"] = truth.sigma2
        out["upsilon"] = c.upsilon
        return out

    def truth_params(self) -> JointParams:
        """The generating parameters as a ``JointParams`` (no catchability terms)."""
        c = self.config
        return JointParams(
            fixed=FixedEffects(
                alpha_prime=c.alpha_prime, alpha=c.alpha,
                theta_prime=list(c.theta_prime), theta=list(c.theta),
            ),
            dispersion=GammaDispersion(log_upsilon=math.log(c.upsilon)),
            catchability=Catchability(vessels=[FDD_VESSEL]),
            preferential=c.preferential,
            u=to_internal(c.field_u.matern),
            v=to_internal(c.field_v.matern),
            w=to_internal(c.field_w.matern),
            temporal=TemporalCorr.from_delta(c.delta),
        )


def _linear_predictors(
    config: ScenarioConfig, covariates: np.ndarray, U, V, W
) -> tuple[np.ndarray, np.ndarray]:
    """Presence and biomass predictors at every node (nodes x T)."""
    names = [c.name for c in config.covariates]
    col = {name: k for k, name in enumerate(names)}
    x_pres = covariates[:, [col[c.name] for c in config.presence_covariates()]]
    x_bio = covariates[:, [col[c.name] for c in config.biomass_covariates()]]
    base_p = config.alpha_prime + x_pres @ np.asarray(config.theta_prime) + V
    base_b = config.alpha + x_bio @ np.asarray(config.theta) + U
    return base_p[:, None] + W, base_b[:, None] + W


def simulate_replicate(config: ScenarioConfig, replicate: int) -> SimulatedReplicate:
    """Simulate replicate ``replicate`` on independent substreams of the master seed."""
    seed = config.master_seed
    config = config.for_replicate(stream_seed(seed, replicate, "loadings"))
    grid = config.grid.build()
    T = config.T
    time_axis = TimeAxis.from_count(T)

    q_u = spde_precision(grid, to_internal(config.field_u.matern))
    q_v = spde_precision(grid, to_internal(config.field_v.matern))
    q_xi = spde_precision(grid, to_internal(config.field_w.matern))
    U = sample_gmrf(q_u, stream_rng(seed, replicate, "field_U"))
    V = sample_gmrf(q_v, stream_rng(seed, replicate, "field_V"))
    W = sample_ar1_spatiotemporal(q_xi, config.delta, T, stream_rng(seed, replicate, "field_W"))

    covariates = np.zeros((grid.n_nodes, len(config.covariates)))
    for k, cov in enumerate(config.covariates):
        q_c = spde_precision(grid, to_internal(cov.matern))
        covariates[:, k] = sample_gmrf(q_c, stream_rng(seed, replicate, f"covariate:{cov.name}"))

    eta_p, eta_b = _linear_predictors(config, covariates, U, V, W)
    pi_nodes = presence_prob(eta_p)
    mu_nodes = mean_biomass(eta_b)

    fid_rng = stream_rng(seed, replicate, "fid")
    fdd_rng = stream_rng(seed, replicate, "fdd")
    obs_rng = stream_rng(seed, replicate, "observations")
    frames = []
    for t in range(T):
        fid_points = sample_fid(grid, config.n_fid, config.fid_mode, fid_rng)
        lam = intensity_surface(grid, V, U, config.preferential, t)
        fdd_nodes = sample_fdd(grid, lam, config.n_fdd, fdd_rng)
        fdd_points = grid.node_coords[fdd_nodes]
        for source, points, vessel in (
            (Source.FID, fid_points, FID_VESSEL),
            (Source.FDD, fdd_points, FDD_VESSEL),
        ):
            a = project(grid, points)
            pi = presence_prob(a @ eta_p[:, t])
            zeta = mean_biomass(a @ eta_b[:, t])
            z, y = simulate_observations(pi, zeta, config.upsilon, obs_rng)
            frame = pd.DataFrame(
                {
                    "source": source.value,
                    "x": points[:, 0],
                    "y": points[:, 1],
                    "t": time_axis.labels[t],
                    "i": 1,
                    "vessel": vessel,
                    "z": z,
                    "y_val": y,
                }
            )
            cov_at = a @ covariates
            for k, cov in enumerate(config.covariates):
                frame[cov.name] = cov_at[:, k]
            frames.append(frame)

    names = [c.name for c in config.covariates]
    obs = ObservationSet.from_frame(pd.concat(frames, ignore_index=True)[COLUMNS + names], names)
    interior = grid.interior_indices
    logger.debug(
        "replicate %d: %d observations, %d positive", replicate, len(obs), int(obs.z.sum())
    )
    return SimulatedReplicate(
        config=config,
        replicate=replicate,
        grid=grid,
        time_axis=time_axis,
        U=U, V=V, W=W,
        covariates=covariates,
        observations=obs,
        truth_pi=pi_nodes[interior],
        truth_mu=mu_nodes[interior],
    )
