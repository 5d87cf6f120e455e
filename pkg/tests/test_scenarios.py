"""Tests for scenario presets and per-replicate seeding."""

import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import InvalidArgumentError
from core.scenarios import GridSpec, ScenarioConfig, scenario_preset
from core.seeding import stream_rng, stream_seed


class TestScenarioPresets:
    """Test the three preferential-sampling scenarios."""

    def test_scenario_one_loads_on_u_only(self):
        config = scenario_preset(1, T=4, rng_seed=1)
        assert config.beta_prime == [0.0] * 4
        assert len(config.beta) == 4
        assert config.beta != [2.0] * 4

    def test_scenario_two_loads_on_v_only(self):
        config = scenario_preset(2, T=3, rng_seed=1)
        assert config.beta == [0.0] * 3
        assert all(b != 0 for b in config.beta_prime)

    def test_scenario_three_loads_on_both(self):
        config = scenario_preset(3, T=2, rng_seed=1)
        assert config.preferential.T == 2
        assert all(b != 0 for b in config.beta_prime + config.beta)

    def test_theta_source(self):
        assert scenario_preset(1, theta_source="figure").theta == [1.0, -0.5]
        assert scenario_preset(1, theta_source="text").theta == [3.0, -0.5]
        with pytest.raises(InvalidArgumentError):
            scenario_preset(1, theta_source="table")

    def test_unknown_scenario(self):
        with pytest.raises(InvalidArgumentError):
            scenario_preset(4)

    def test_comb_and_grid(self):
        config = scenario_preset(1, T=2, comb=(50, 80), grid=GridSpec(nx=20, ny=20, mesh_subsample=2))
        assert (config.n_fid, config.n_fdd) == (50, 80)
        mesh = config.grid.build_mesh()
        assert (mesh.nx, mesh.ny) == (10, 10)

    def test_covariate_targets(self):
        config = scenario_preset(1)
        assert len(config.presence_covariates) == len(config.theta_prime) == 2
        assert len(config.biomass_covariates) == len(config.theta) == 2

    def test_length_validation(self):
        config = scenario_preset(1, T=2)
        data = config.model_dump()
        data["alpha_pp"] = [0.0]
        with pytest.raises(ValidationError):
            ScenarioConfig(**data)

    def test_for_replicate_redraws_loadings(self):
        config = scenario_preset(3, T=4, rng_seed=5)
        a = config.for_replicate(stream_seed(5, 0, "loadings"))
        b = config.for_replicate(stream_seed(5, 0, "loadings"))
        c = config.for_replicate(stream_seed(5, 1, "loadings"))
        assert a.beta == b.beta
        assert a.beta != c.beta


class TestSeeding:
    """Test independent named substreams."""

    def test_streams_are_reproducible(self):
        a = stream_rng(42, 3, "field_U").standard_normal(5)
        b = stream_rng(42, 3, "field_U").standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_by_tag_and_replicate(self):
        base = stream_rng(42, 3, "field_U").standard_normal(5)
        assert not np.array_equal(base, stream_rng(42, 3, "field_V").standard_normal(5))
        assert not np.array_equal(base, stream_rng(42, 4, "field_U").standard_normal(5))
        assert not np.array_equal(base, stream_rng(43, 3, "field_U").standard_normal(5))
