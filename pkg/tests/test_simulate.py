"""Tests for replicate simulation."""

import numpy as np
import pandas as pd
import pytest

from core.scenarios import GridSpec, scenario_preset
from core.simulate import FDD_VESSEL, FID_VESSEL, simulate_replicate

TINY = GridSpec(nx=8, ny=8, pad_fraction=0.25)


class TestSimulateReplicate:
    """Test one simulated replicate end to end."""

    def setup_method(self):
        self.config = scenario_preset(3, T=2, rng_seed=11, comb=(10, 12), grid=TINY)
        self.sim = simulate_replicate(self.config, 0)

    def test_reproducible(self):
        again = simulate_replicate(self.config, 0)
        pd.testing.assert_frame_equal(again.observations.frame, self.sim.observations.frame)
        np.testing.assert_array_equal(again.U, self.sim.U)

    def test_replicates_differ(self):
        other = simulate_replicate(self.config, 1)
        assert not np.array_equal(other.U, self.sim.U)
        assert other.config.beta != self.sim.config.beta

    def test_counts_per_time_and_source(self):
        frame = self.sim.observations.frame
        counts = frame.groupby(["t", "source"]).size().to_dict()
        assert counts == {("1", "FDD"): 12, ("1", "FID"): 10, ("2", "FDD"): 12, ("2", "FID"): 10}

    def test_hurdle_invariant(self):
        obs = self.sim.observations
        assert np.all(obs.y[obs.z == 0] == 0)
        assert np.all(obs.y[obs.z == 1] > 0)

    def test_vessels_follow_source(self):
        obs = self.sim.observations
        assert set(obs.vessels[obs.is_fid]) == {FID_VESSEL}
        assert set(obs.vessels[obs.is_fdd]) == {FDD_VESSEL}

    def test_commercial_rows_sit_on_interior_nodes(self):
        grid = self.sim.grid
        interior = {tuple(p) for p in grid.node_coords[grid.interior_indices]}
        fdd = self.sim.observations.locations[self.sim.observations.is_fdd]
        assert all(tuple(p) in interior for p in fdd)

    def test_truth_surface(self):
        n = self.sim.grid.n_interior
        assert self.sim.truth_surface.shape == (n, 2)
        assert np.all(self.sim.truth_pi > 0) and np.all(self.sim.truth_pi < 1)
        assert np.all(self.sim.truth_mu > 0)

    def test_truth_values_use_realized_loadings(self):
        truth = self.sim.truth_values()
        assert truth["beta[2]"] == self.sim.config.beta[1]
        assert truth["beta_prime[1]"] == self.sim.config.beta_prime[0]
        assert truth["phi_V"] == self.config.field_v.phi
        assert truth["upsilon"] == 1.0

    def test_truth_params(self):
        params = self.sim.truth_params()
        assert params.T == 2
        assert params.preferential.beta == self.sim.config.beta
        assert params.temporal.delta == pytest.approx(self.config.delta)

    def test_designs(self):
        design = self.sim.design()
        assert design.presence_columns == ["c_presence_1", "c_presence_2"]
        assert design.biomass_columns == ["c_biomass_1", "c_biomass_2"]
        assert design.presence.shape == (len(self.sim.observations), 2)
        presence, biomass = self.sim.node_designs()
        assert presence.shape == biomass.shape == (self.sim.grid.n_interior, 2)
