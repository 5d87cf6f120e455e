"""Tests for the Laplace marginal, the outer fit and surface prediction."""

import json
import math
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from scipy import optimize, sparse, stats

from core.config import InferenceSettings
from core.errors import InnerFailureError, InvalidArgumentError
from core.fields import MaternInternal
from core.grid import TimeAxis
from core.hurdle import GammaDispersion
from core.inference import (
    FitReport,
    _newton_direction,
    compare_models,
    default_init,
    fit,
    inner_optimize,
    laplace_marginal_nll,
    predict_surface,
    write_components,
)
from core.likelihood import JointObjective, ModelData
from core.params import Family, ModelSpec, ParameterLayout

from .helpers import small_mesh, small_observations, small_params

FAST = InferenceSettings(outer_max_iter=3, variance_method="none")


class TestLaplaceMarginal:
    """Test the inner Newton solve and the marginal it implies."""

    def setup_method(self):
        self.mesh = small_mesh()
        self.obs, _ = small_observations(self.mesh)
        self.axis = TimeAxis.from_count(2)

    def test_gaussian_marginal_is_exact(self):
        """With Gaussian observations the latent posterior is Gaussian and Laplace is exact."""
        rng = np.random.default_rng(8)
        obs = self.obs.subset(self.obs.is_fid)
        frame = obs.frame.copy()
        frame["y_val"] = rng.normal(0.5, 1.0, len(frame))
        obs = type(obs).from_frame(frame)
        spec = ModelSpec.for_variant("fid", family=Family.GAUSSIAN)
        data = ModelData(obs, self.mesh, self.axis, spec=spec)
        params = small_params().model_copy(update={"dispersion": GammaDispersion(log_upsilon=math.log(0.5))})

        objective = JointObjective(params, data)
        m = data.M_biomass.toarray()
        cov = m @ np.linalg.inv(objective.q_prior.toarray()) @ m.T + 0.25 * np.eye(data.m)
        expected = -stats.multivariate_normal(mean=objective.offset_biomass, cov=cov).logpdf(data.y)

        result = inner_optimize(params, data, self.mesh, self.axis)
        assert result.converged
        assert result.iterations <= 2
        assert result.nll == pytest.approx(expected, rel=1e-8)
        assert laplace_marginal_nll(params, data, self.mesh, self.axis) == pytest.approx(result.nll)

    def test_hurdle_mode_is_stationary(self):
        data = ModelData(self.obs, self.mesh, self.axis)
        result = inner_optimize(small_params(), data, self.mesh, self.axis)
        assert result.converged
        assert np.max(np.abs(result.objective.gradient(result.mode))) < 1e-5
        assert np.isfinite(result.nll)
        latent = result.latent(self.mesh.n_nodes, 2)
        assert latent.W.shape == (self.mesh.n_nodes, 2)

    def test_warm_start_reaches_same_mode(self):
        data = ModelData(self.obs, self.mesh, self.axis)
        cold = inner_optimize(small_params(), data, self.mesh, self.axis)
        warm = inner_optimize(small_params(), data, self.mesh, self.axis, start=cold.mode)
        assert warm.iterations <= 1
        assert warm.nll == pytest.approx(cold.nll, rel=1e-9)

    def test_ridge_rescues_nearly_singular_hessian(self):
        h = sparse.diags([1.0, -1e-9]).tocsc()
        step, _ = _newton_direction(h, np.array([1.0, 1.0]), InferenceSettings())
        assert np.all(np.isfinite(step))

    def test_indefinite_hessian_fails(self):
        h = sparse.diags([1.0, -1.0]).tocsc()
        with pytest.raises(InnerFailureError):
            _newton_direction(h, np.array([1.0, 1.0]), InferenceSettings())


class TestFit:
    """Test the outer fit and its report."""

    def setup_method(self):
        self.mesh = small_mesh()
        self.obs, _ = small_observations(self.mesh)
        self.axis = TimeAxis.from_count(2)
        self.data = ModelData(self.obs, self.mesh, self.axis)
        self.temp_dir = tempfile.TemporaryDirectory()
        self.out = Path(self.temp_dir.name)

    def teardown_method(self):
        self.temp_dir.cleanup()

    def test_default_init(self):
        init = default_init(self.data)
        assert init.preferential.alpha_pp == pytest.approx([math.log(8.0)] * 2)
        assert init.T == 2
        assert init.catchability.vessels == [2, 3]

    def test_report_fields(self):
        report = fit(self.data, self.mesh, self.axis, config=FAST)
        layout = ParameterLayout.build(ModelSpec(), 2, 0, 0)
        assert report.names == layout.names
        assert report.n_params == layout.size
        assert report.aic == pytest.approx(2 * report.n_params + 2 * report.nll)
        assert np.isfinite(report.nll)
        assert all(math.isnan(v) for v in report.standard_errors.values())
        assert set(report.components) >= {"presence", "biomass", "point_process"}
        assert len(report.latent_mode) == self.data.n_latent

    def test_fit_does_not_worsen_the_start(self):
        init = default_init(self.data)
        start = laplace_marginal_nll(init, self.data, self.mesh, self.axis)
        report = fit(self.data, self.mesh, self.axis, init=init, config=FAST)
        assert report.nll <= start + 1e-9

    def test_json_round_trip(self):
        report = fit(self.data, self.mesh, self.axis, config=FAST)
        path = report.to_json(self.out / "fit.json")
        loaded = FitReport.from_json(path)
        assert loaded.estimates == report.estimates
        assert loaded.spec == report.spec
        assert loaded.mesh == report.mesh
        assert math.isnan(loaded.standard_errors["alpha"])
        np.testing.assert_array_equal(loaded.latent().U, report.latent().U)

    def test_write_components(self):
        report = fit(self.data, self.mesh, self.axis, config=FAST)
        record = json.loads(write_components(report, self.out / "components.json").read_text())
        assert record["total"] == pytest.approx(-sum(report.components.values()))

    def test_worse_optimizer_end_keeps_start(self):
        init = default_init(self.data)
        layout = ParameterLayout.build(ModelSpec(), 2, 0, 0)
        x0 = layout.pack(init)
        worse = optimize.OptimizeResult(
            x=x0 + 50.0, fun=0.0, jac=np.zeros_like(x0), success=True, status=0,
            message="Optimization terminated successfully.", nit=7,
        )
        with patch("core.inference.optimize.minimize", return_value=worse):
            report = fit(self.data, self.mesh, self.axis, init=init, config=FAST)
        assert report.estimates == dict(zip(layout.names, x0.tolist()))
        assert report.nll == pytest.approx(laplace_marginal_nll(init, self.data, self.mesh, self.axis))
        assert report.gradient_norm > 0
        assert report.converged == (report.gradient_norm < FAST.outer_gtol)
        assert "kept the initial point" in report.message

    def test_mismatched_init(self):
        with pytest.raises(InvalidArgumentError):
            fit(self.data, self.mesh, self.axis, init=small_params(T=1), config=FAST)

    def test_failed_initial_point_is_reported(self):
        bad = default_init(self.data).model_copy(update={"u": MaternInternal(log_kappa=1.0, log_tau=-400.0)})
        report = fit(self.data, self.mesh, self.axis, init=bad, config=FAST)
        assert not report.converged
        assert report.status == -1
        assert math.isnan(report.nll)

    def test_compare_models(self):
        joint = fit(self.data, self.mesh, self.axis, config=FAST)
        fid_data = ModelData(self.obs, self.mesh, self.axis, spec=ModelSpec.for_variant("fid"))
        fid = fit(fid_data, self.mesh, self.axis, config=FAST)
        table = compare_models({"joint": joint, "fid_only": fid})
        assert list(table.columns) == ["model", "k", "loglik", "aic", "converged", "delta_aic"]
        assert table["delta_aic"].iloc[0] == 0.0
        assert table["aic"].is_monotonic_increasing

    @pytest.mark.slow
    def test_full_fit_with_standard_errors(self):
        settings = InferenceSettings(outer_max_iter=200)
        report = fit(self.data, self.mesh, self.axis, config=settings)
        assert report.iterations > 0
        assert set(report.standard_errors) == set(report.names)
        if report.hessian_pd:
            assert all(v > 0 for v in report.standard_errors.values())


class TestPrediction:
    """Test surface prediction on the sampling grid."""

    def setup_method(self):
        self.mesh = small_mesh()
        self.obs, _ = small_observations(self.mesh)
        self.axis = TimeAxis.from_count(2)
        self.data = ModelData(self.obs, self.mesh, self.axis)
        self.report = fit(self.data, self.mesh, self.axis, config=FAST)

    def test_shapes_and_ranges(self):
        prediction = predict_surface(self.report)
        n = self.mesh.n_interior
        assert prediction.pi.shape == (n, 2)
        assert np.all((prediction.pi > 0) & (prediction.pi < 1))
        assert np.all(prediction.mu > 0)
        assert np.all(prediction.mu_se > 0)
        np.testing.assert_allclose(prediction.expected, prediction.pi * prediction.mu)

    def test_frame_layout(self):
        frame = predict_surface(self.report, with_se=False).to_frame()
        assert list(frame.columns) == ["node_id", "x", "y", "t", "pi", "pi_se", "mu", "mu_se", "expected"]
        assert len(frame) == 2 * self.mesh.n_interior
        assert frame["t"].tolist()[: self.mesh.n_interior] == ["1"] * self.mesh.n_interior
        assert frame["mu_se"].isna().all()

    def test_loaded_report_rebuilds_factor(self):
        live = predict_surface(self.report)
        with tempfile.TemporaryDirectory() as tmp:
            loaded = FitReport.from_json(self.report.to_json(Path(tmp) / "fit.json"))
        assert np.isnan(predict_surface(loaded).mu_se).all()
        rebuilt = predict_surface(loaded, data=self.data)
        np.testing.assert_allclose(rebuilt.mu_se, live.mu_se, rtol=1e-8)

    def test_time_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            predict_surface(self.report, time_axis=TimeAxis.from_count(3))
