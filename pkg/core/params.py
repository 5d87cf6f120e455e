"""Joint parameter container, model structure and the outer parameter vector."""

import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .fields import FieldParams, MaternInternal, TemporalCorr, to_interpretable
from .hurdle import Catchability, CatchabilityModel, FixedEffects, GammaDispersion
from .sampling import PreferentialParams


class Family(str, Enum):
    HURDLE = "hurdle"
    GAUSSIAN = "gaussian"


class Variant(str, Enum):
    JOINT = "joint"
    FID_ONLY = "fid_only"
    FDD_ONLY = "fdd_only"

    @classmethod
    def parse(cls, value: str) -> "Variant":
        aliases = {"fid": cls.FID_ONLY, "fdd": cls.FDD_ONLY}
        return aliases.get(value, None) or cls(value)


class ModelSpec(BaseModel):
    """Which data sources and terms enter the joint likelihood."""

    model_config = ConfigDict(frozen=True)

    family: Family = Family.HURDLE
    catchability: CatchabilityModel = CatchabilityModel.NONE
    use_fid: bool = True
    use_fdd: bool = True
    preferential: bool = True

    @classmethod
    def for_variant(cls, variant: Variant | str, **kwargs) -> "ModelSpec":
        variant = Variant.parse(variant) if isinstance(variant, str) else variant
        if variant is Variant.FID_ONLY:
            return cls(use_fid=True, use_fdd=False, preferential=False, **kwargs)
        if variant is Variant.FDD_ONLY:
            return cls(use_fid=False, use_fdd=True, preferential=True, **kwargs)
        return cls(**kwargs)

    @property
    def has_ipp(self) -> bool:
        return self.use_fdd and self.preferential


class JointParams(BaseModel):
    """Every outer parameter of the joint model on its internal scale."""

    model_config = ConfigDict(frozen=True)

    fixed: FixedEffects = FixedEffects()
    dispersion: GammaDispersion = GammaDispersion()
    catchability: Catchability = Catchability()
    preferential: PreferentialParams
    u: MaternInternal
    v: MaternInternal
    w: MaternInternal
    temporal: TemporalCorr

    @property
    def fields(self) -> FieldParams:
        return FieldParams(u=self.u, v=self.v, w=self.w, temporal=self.temporal)

    @property
    def T(self) -> int:
        return self.preferential.T

    def interpretable(self) -> dict[str, float]:
        out = self.fields.interpretable()
        out["upsilon"] = self.dispersion.upsilon
        out["sigma_gamma"] = math.exp(self.catchability.log_sigma_gamma)
        return out


class ParameterLayout(BaseModel):
    """Named, ordered outer parameter vector for one model structure."""

    model_config = ConfigDict(frozen=True)

    spec: ModelSpec
    T: int
    n_theta_prime: int
    n_theta: int
    n_theta_c: int = 0
    has_dispersion: bool = True
    names: list[str] = Field(default_factory=list)

    @classmethod
    def build(
        cls,
        spec: ModelSpec,
        T: int,
        n_theta_prime: int,
        n_theta: int,
        n_theta_c: int = 0,
        has_dispersion: bool = True,
    ) -> "ParameterLayout":
        names: list[str] = []
        if spec.family is Family.HURDLE:
            names.append("alpha_prime")
            names += [f"theta_prime[{j + 1}]" for j in range(n_theta_prime)]
        names.append("alpha")
        names += [f"theta[{j + 1}]" for j in range(n_theta)]
        if has_dispersion:
            names.append("log_upsilon")
        cm = spec.catchability
        if cm.has_intercept:
            names.append("alpha_c")
        if cm.has_random_effects:
            names.append("log_sigma_gamma")
        if cm.has_attributes:
            names += [f"theta_c[{j + 1}]" for j in range(n_theta_c)]
        if spec.has_ipp:
            names += [f"alpha_pp[{t + 1}]" for t in range(T)]
            names += [f"beta_prime[{t + 1}]" for t in range(T)]
            names += [f"beta[{t + 1}]" for t in range(T)]
        for field in ("U", "V", "W"):
            names += [f"log_kappa_{field}", f"log_tau_{field}"]
        names.append("delta_star")
        return cls(
            spec=spec, T=T, n_theta_prime=n_theta_prime, n_theta=n_theta,
            n_theta_c=n_theta_c if cm.has_attributes else 0,
            has_dispersion=has_dispersion, names=names,
        )

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def pack(self, p: JointParams) -> np.ndarray:
        values: dict[str, float] = {
            "alpha_prime": p.fixed.alpha_prime,
            "alpha": p.fixed.alpha,
            "log_upsilon": p.dispersion.log_upsilon,
            "alpha_c": p.catchability.alpha_c,
            "log_sigma_gamma": p.catchability.log_sigma_gamma,
            "delta_star": p.temporal.delta_star,
        }
        for j, v in enumerate(p.fixed.theta_prime):
            values[f"theta_prime[{j + 1}]"] = v
        for j, v in enumerate(p.fixed.theta):
            values[f"theta[{j + 1}]"] = v
        for j, v in enumerate(p.catchability.fixed_terms):
            values[f"theta_c[{j + 1}]"] = v
        for t in range(p.T):
            values[f"alpha_pp[{t + 1}]"] = p.preferential.alpha_pp[t]
            values[f"beta_prime[{t + 1}]"] = p.preferential.beta_prime[t]
            values[f"beta[{t + 1}]"] = p.preferential.beta[t]
        for field, m in (("U", p.u), ("V", p.v), ("W", p.w)):
            values[f"log_kappa_{field}"] = m.log_kappa
            values[f"log_tau_{field}"] = m.log_tau
        return np.array([values[name] for name in self.names], dtype=float)

    def unpack(self, x: np.ndarray, template: JointParams | None = None) -> JointParams:
        """Inverse of ``pack``; parameters outside the layout come from ``template``."""
        get = dict(zip(self.names, (float(v) for v in x)))
        base = template or default_params(self.T, self.n_theta_prime, self.n_theta)

        def val(name: str, fallback: float) -> float:
            return get.get(name, fallback)

        fixed = FixedEffects(
            alpha_prime=val("alpha_prime", base.fixed.alpha_prime),
            alpha=val("alpha", base.fixed.alpha),
            theta_prime=[
                val(f"theta_prime[{j + 1}]", _at(base.fixed.theta_prime, j))
                for j in range(self.n_theta_prime)
            ],
            theta=[val(f"theta[{j + 1}]", _at(base.fixed.theta, j)) for j in range(self.n_theta)],
        )
        c = base.catchability
        catch = c.model_copy(
            update={
                "alpha_c": val("alpha_c", c.alpha_c),
                "log_sigma_gamma": val("log_sigma_gamma", c.log_sigma_gamma),
                "fixed_terms": [
                    val(f"theta_c[{j + 1}]", _at(c.fixed_terms, j)) for j in range(self.n_theta_c)
                ] if self.n_theta_c else list(c.fixed_terms),
            }
        )
        pref = base.preferential
        preferential = PreferentialParams(
            alpha_pp=[val(f"alpha_pp[{t + 1}]", pref.alpha_pp[t]) for t in range(self.T)],
            beta_prime=[val(f"beta_prime[{t + 1}]", pref.beta_prime[t]) for t in range(self.T)],
            beta=[val(f"beta[{t + 1}]", pref.beta[t]) for t in range(self.T)],
        )

        def matern(field: str, m: MaternInternal) -> MaternInternal:
            return MaternInternal(
                log_kappa=val(f"log_kappa_{field}", m.log_kappa),
                log_tau=val(f"log_tau_{field}", m.log_tau),
            )

        return JointParams(
            fixed=fixed,
            dispersion=GammaDispersion(log_upsilon=val("log_upsilon", base.dispersion.log_upsilon)),
            catchability=catch,
            preferential=preferential,
            u=matern("U", base.u),
            v=matern("V", base.v),
            w=matern("W", base.w),
            temporal=TemporalCorr(delta_star=val("delta_star", base.temporal.delta_star)),
        )

    def interpretable(self, p: JointParams) -> dict[str, float]:
        """Reparameterized values for the parameters this layout estimates."""
        out: dict[str, float] = {}
        for field, m in (("U", p.u), ("V", p.v), ("W", p.w)):
            q = to_interpretable(m)
            out[f"phi_{field}"] = q.phi
            out[f"sigma_{field}"] = q.sigma
            out[f"sigma2_{field}"] = q.sigma**2
        out["delta"] = p.temporal.delta
        if self.has_dispersion:
            out["upsilon"] = p.dispersion.upsilon
        if self.spec.catchability.has_random_effects:
            out["sigma_gamma"] = math.exp(p.catchability.log_sigma_gamma)
        return out


def _at(values: list[float], j: int) -> float:
    return values[j] if j < len(values) else 0.0


def default_params(T: int, n_theta_prime: int = 0, n_theta: int = 0) -> JointParams:
    return JointParams(
        fixed=FixedEffects(theta_prime=[0.0] * n_theta_prime, theta=[0.0] * n_theta),
        preferential=PreferentialParams.zeros(T),
        u=MaternInternal(log_kappa=0.0, log_tau=0.0),
        v=MaternInternal(log_kappa=0.0, log_tau=0.0),
        w=MaternInternal(log_kappa=0.0, log_tau=0.0),
        temporal=TemporalCorr(delta_star=0.0),
    )
