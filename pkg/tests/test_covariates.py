"""Tests for covariate specs, lag weighting and design matrices."""

import tempfile
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from connectors.data.covariates import (
    CovariateSpec,
    TriangularLagKernel,
    design_from_frame,
    lag_weight,
    load_covariate_specs,
    load_daily_covariates,
    spline_basis,
)
from core.errors import InvalidArgumentError, MissingDataError, SchemaError


class TestLagWeight:
    """Test the triangular lag kernel."""

    def test_weights(self):
        w = TriangularLagKernel().weights(2, 4)
        np.testing.assert_allclose(w, np.array([1, 2, 3, 2, 1]) / 9)

    def test_weights_peak_at_zero(self):
        w = TriangularLagKernel().weights(0, 0)
        np.testing.assert_array_equal(w, [1.0])

    def test_weighted_average(self):
        assert lag_weight([1.0, 2.0, 3.0, 4.0, 5.0], 2, 4) == pytest.approx(3.0)

    def test_constant_series(self):
        assert lag_weight(np.full(8, 1.7), 3, 7) == pytest.approx(1.7)

    def test_short_or_missing_window(self):
        with pytest.raises(MissingDataError):
            lag_weight([1.0, 2.0], 1, 4)
        with pytest.raises(MissingDataError):
            lag_weight([1.0, np.nan, 3.0], 1, 2)

    def test_peak_after_window(self):
        with pytest.raises(InvalidArgumentError):
            TriangularLagKernel().weights(5, 3)


class TestCovariateSpec:
    """Test spec validation and labels."""

    def test_labels(self):
        assert CovariateSpec(name="sst", transform="lag_weighted", c=2, l=4).label == "K(sst,2,4)"
        assert CovariateSpec(name="depth", transform="spline_basis").label == "bs(depth)"

    def test_invalid_specs(self):
        with pytest.raises(ValidationError):
            CovariateSpec(name="sst", transform="lag_weighted", c=2)
        with pytest.raises(ValidationError):
            CovariateSpec(name="sst", c=5, l=3)
        with pytest.raises(ValidationError):
            CovariateSpec(name="depth", targets=["catch"])
        with pytest.raises(ValidationError):
            CovariateSpec(name="depth", transform="spline_basis", knots=2)

    def test_load_specs(self):
        with tempfile.TemporaryDirectory() as tmp:
            keyed = Path(tmp) / "keyed.yaml"
            keyed.write_text("covariates:\n  - name: depth\n    targets: [presence]\n")
            bare = Path(tmp) / "bare.yaml"
            bare.write_text("- name: sst\n  transform: lag_weighted\n  c: 1\n  l: 3\n")
            assert load_covariate_specs(keyed)[0].targets == ["presence"]
            assert load_covariate_specs(bare)[0].lagged


class TestDesign:
    """Test design matrices built from observation rows."""

    def setup_method(self):
        rng = np.random.default_rng(0)
        self.frame = pd.DataFrame(
            {"x": rng.uniform(size=40), "y": rng.uniform(size=40), "t": "2020", "i": 5,
             "depth": rng.uniform(10, 200, 40), "sst": rng.normal(12, 2, 40)}
        )

    def test_identity_terms_follow_targets(self):
        specs = [CovariateSpec(name="depth", targets=["presence"]), CovariateSpec(name="sst")]
        design = design_from_frame(self.frame, specs)
        assert design.presence_columns == ["depth", "sst"]
        assert design.biomass_columns == ["sst"]
        np.testing.assert_array_equal(design.biomass[:, 0], self.frame["sst"].to_numpy())

    def test_spline_block_and_identifiable_trim(self):
        specs = [
            CovariateSpec(name="sst"),
            CovariateSpec(name="depth", transform="spline_basis", knots=4),
        ]
        design = design_from_frame(self.frame, specs)
        assert design.presence.shape == (40, 7)
        assert design.presence_blocks == [(1, 6)]
        np.testing.assert_allclose(design.presence[:, 1:].sum(axis=1), 1.0)
        trimmed = design.identifiable()
        assert trimmed.presence.shape == (40, 6)
        assert trimmed.presence_blocks == [(1, 5)]
        assert "bs(depth)[0]" not in trimmed.presence_columns

    def test_knots_are_reused(self):
        spec = CovariateSpec(name="depth", transform="spline_basis", kind="cr", knots=4)
        train = design_from_frame(self.frame, [spec])
        shifted = self.frame.assign(depth=self.frame["depth"] + 500.0)
        test = design_from_frame(shifted, [spec], knots=train.knots)
        assert test.knots == train.knots
        np.testing.assert_allclose(test.biomass, np.tile(test.biomass[0], (40, 1)))

    def test_cubic_regression_basis(self):
        x = np.linspace(0, 1, 25)
        basis = spline_basis(x, "cr", np.array([0.0, 0.3, 0.7, 1.0]))
        assert basis.shape[0] == 25
        assert np.all(np.isfinite(basis))

    def test_missing_column(self):
        with pytest.raises(SchemaError):
            design_from_frame(self.frame, [CovariateSpec(name="chlorophyll")])

    def test_lagged_term_needs_daily_table(self):
        spec = CovariateSpec(name="sst", transform="lag_weighted", c=1, l=2)
        with pytest.raises(MissingDataError):
            design_from_frame(self.frame, [spec])


class TestDailyCovariates:
    """Test lagged values drawn from a daily table."""

    def setup_method(self):
        days = [date(2020, 1, 1) + timedelta(days=k) for k in range(10)]
        self.daily = pd.DataFrame(
            {"date": days, "x": 0.5, "y": 0.5, "name": "sst", "value": [d.day for d in days]}
        )
        self.spec = CovariateSpec(name="sst", transform="lag_weighted", c=1, l=2)

    def test_lagged_value(self):
        frame = pd.DataFrame({"x": [0.4], "y": [0.6], "t": ["2020"], "i": [5]})
        design = design_from_frame(frame, [self.spec], daily=self.daily)
        assert design.presence_columns == ["K(sst,1,2)"]
        assert design.presence[0, 0] == pytest.approx(4.0)

    def test_window_before_series(self):
        frame = pd.DataFrame({"x": [0.5], "y": [0.5], "t": ["2020"], "i": [2]})
        with pytest.raises(MissingDataError):
            design_from_frame(frame, [self.spec], daily=self.daily)

    def test_non_year_labels(self):
        frame = pd.DataFrame({"x": [0.5], "y": [0.5], "t": ["spring"], "i": [5]})
        with pytest.raises(InvalidArgumentError):
            design_from_frame(frame, [self.spec], daily=self.daily)

    def test_load_daily(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "daily.csv"
            self.daily.to_csv(path, index=False)
            loaded = load_daily_covariates(path)
            assert loaded["date"].iloc[3] == date(2020, 1, 4)
            bad = Path(tmp) / "bad.csv"
            bad.write_text("day,x,y,name,value\n2020-01-01,0,0,sst,1\n")
            with pytest.raises(SchemaError) as info:
                load_daily_covariates(bad)
            assert info.value.line == 1
