"""Small shared fixtures: a padded mesh, mixed FID/FDD observations and parameters."""

import math

import numpy as np
import pandas as pd

from connectors.data.observations import COLUMNS, ObservationSet
from core.fields import MaternInterpretable, TemporalCorr, to_internal
from core.grid import build_grid
from core.hurdle import FixedEffects, GammaDispersion
from core.params import default_params
from core.sampling import PreferentialParams


def small_mesh():
    return build_grid(4, 4, pad_fraction=0.25)


def small_observations(mesh, T=2, n_fid=12, n_fdd=8, seed=0, fdd_vessels=(2, 3)):
    """FID rows anywhere in the domain, FDD rows on distinct interior nodes."""
    rng = np.random.default_rng(seed)
    frames = []
    fdd_nodes = {}
    for t in range(T):
        label = str(t + 1)
        nodes = rng.choice(mesh.interior_indices, size=n_fdd, replace=False)
        fdd_nodes[t] = nodes
        for source, points, vessels in (
            ("FID", rng.uniform(0, 1, size=(n_fid, 2)), np.ones(n_fid, dtype=int)),
            ("FDD", mesh.node_coords[nodes], np.resize(np.asarray(fdd_vessels), n_fdd)),
        ):
            m = points.shape[0]
            z = rng.integers(0, 2, size=m)
            z[0] = 1
            y = np.where(z == 1, rng.gamma(2.0, 1.0, size=m) + 0.05, 0.0)
            frames.append(
                pd.DataFrame(
                    {"source": source, "x": points[:, 0], "y": points[:, 1], "t": label,
                     "i": 1, "vessel": vessels, "z": z, "y_val": y}
                )
            )
    return ObservationSet.from_frame(pd.concat(frames, ignore_index=True)[COLUMNS]), fdd_nodes


def small_params(T=2):
    matern = to_internal(MaternInterpretable(phi=0.5, sigma=1.0))
    base = default_params(T)
    return base.model_copy(
        update={
            "fixed": FixedEffects(alpha_prime=0.2, alpha=0.3),
            "dispersion": GammaDispersion(log_upsilon=math.log(0.8)),
            "preferential": PreferentialParams(
                alpha_pp=[3.0, 3.2][:T], beta_prime=[0.5, -0.4][:T], beta=[1.0, 0.8][:T]
            ),
            "u": matern,
            "v": matern,
            "w": matern,
            "temporal": TemporalCorr.from_delta(0.6),
        }
    )


def central_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g
