"""Tests for the outer parameter layout."""

import math

import numpy as np
import pytest

from core.fields import MaternInternal, TemporalCorr
from core.hurdle import Catchability, CatchabilityModel, FixedEffects, GammaDispersion
from core.params import Family, JointParams, ModelSpec, ParameterLayout, Variant, default_params
from core.sampling import PreferentialParams


def _params() -> JointParams:
    return JointParams(
        fixed=FixedEffects(alpha_prime=0.3, alpha=-0.2, theta_prime=[1.0, -2.0], theta=[0.5, 0.25]),
        dispersion=GammaDispersion(log_upsilon=0.1),
        catchability=Catchability(alpha_c=0.4, log_sigma_gamma=-0.5, vessels=[2, 3]),
        preferential=PreferentialParams(alpha_pp=[1.0, 2.0], beta_prime=[0.5, 0.6], beta=[2.1, 1.9]),
        u=MaternInternal(log_kappa=1.0, log_tau=-1.0),
        v=MaternInternal(log_kappa=1.5, log_tau=-0.5),
        w=MaternInternal(log_kappa=2.0, log_tau=0.0),
        temporal=TemporalCorr.from_delta(0.7),
    )


class TestVariants:
    """Test variant parsing and model structure."""

    def test_parse_aliases(self):
        assert Variant.parse("fid") is Variant.FID_ONLY
        assert Variant.parse("fdd_only") is Variant.FDD_ONLY
        with pytest.raises(ValueError):
            Variant.parse("both")

    def test_for_variant(self):
        fid = ModelSpec.for_variant("fid")
        assert fid.use_fid and not fid.use_fdd and not fid.has_ipp
        fdd = ModelSpec.for_variant(Variant.FDD_ONLY)
        assert not fdd.use_fid and fdd.has_ipp
        joint = ModelSpec.for_variant("joint", family=Family.GAUSSIAN)
        assert joint.family is Family.GAUSSIAN and joint.has_ipp


class TestParameterLayout:
    """Test naming, packing and unpacking of the outer vector."""

    def test_joint_hurdle_names(self):
        layout = ParameterLayout.build(ModelSpec(), T=2, n_theta_prime=2, n_theta=2)
        assert layout.size == 20
        assert layout.names[:4] == ["alpha_prime", "theta_prime[1]", "theta_prime[2]", "alpha"]
        assert layout.names[-1] == "delta_star"
        assert "beta[2]" in layout.names

    def test_fid_only_has_no_preferential_terms(self):
        layout = ParameterLayout.build(ModelSpec.for_variant("fid"), T=2, n_theta_prime=2, n_theta=2)
        assert layout.size == 14
        assert not any(name.startswith(("alpha_pp", "beta")) for name in layout.names)

    def test_gaussian_drops_presence_terms(self):
        layout = ParameterLayout.build(
            ModelSpec(family=Family.GAUSSIAN), T=2, n_theta_prime=2, n_theta=2
        )
        assert "alpha_prime" not in layout.names
        assert layout.size == 17

    def test_catchability_terms(self):
        spec = ModelSpec(catchability=CatchabilityModel.ATTRIBUTES)
        layout = ParameterLayout.build(spec, T=1, n_theta_prime=0, n_theta=0, n_theta_c=2)
        assert {"alpha_c", "log_sigma_gamma", "theta_c[1]", "theta_c[2]"} <= set(layout.names)

    def test_pack_unpack_bijection(self):
        p = _params()
        layout = ParameterLayout.build(ModelSpec(), T=2, n_theta_prime=2, n_theta=2)
        x = layout.pack(p)
        assert x[layout.index("beta[1]")] == pytest.approx(2.1)
        back = layout.unpack(x, template=p)
        np.testing.assert_array_equal(layout.pack(back), x)
        assert back.fixed == p.fixed
        assert back.preferential == p.preferential
        assert back.temporal.delta == pytest.approx(0.7)

    def test_unpack_keeps_template_outside_layout(self):
        p = _params()
        layout = ParameterLayout.build(ModelSpec.for_variant("fid"), T=2, n_theta_prime=2, n_theta=2)
        back = layout.unpack(layout.pack(p) + 1.0, template=p)
        assert back.preferential == p.preferential
        assert back.fixed.alpha == pytest.approx(p.fixed.alpha + 1.0)

    def test_interpretable(self):
        p = _params()
        layout = ParameterLayout.build(ModelSpec(), T=2, n_theta_prime=2, n_theta=2)
        values = layout.interpretable(p)
        assert values["phi_U"] == pytest.approx(math.sqrt(8.0) / math.e)
        assert values["sigma2_W"] == pytest.approx(values["sigma_W"] ** 2)
        assert values["upsilon"] == pytest.approx(math.exp(0.1))
        assert "sigma_gamma" not in values

    def test_default_params(self):
        p = default_params(3, 1, 2)
        assert p.T == 3
        assert p.fixed.theta == [0.0, 0.0]
        assert p.temporal.delta == pytest.approx(0.0)
