"""Configuration management."""

import os
import re
import tomllib
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .hurdle import CatchabilityModel
from .params import Family, Variant


class GeneralSettings(BaseModel):
    project_name: str = "prefsim"
    log_level: str = "INFO"
    debug_components: bool = False


class GridSettings(BaseModel):
    """Sampling grid; the inference mesh is the grid coarsened by ``mesh_subsample``."""

    nx: int = Field(default=60, ge=2)
    ny: int = Field(default=60, ge=2)
    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0
    pad_fraction: float = Field(default=0.2, ge=0.0)
    mesh_subsample: int = Field(default=1, ge=1)


class InferenceSettings(BaseModel):
    """Inner Newton and outer quasi-Newton controls."""

    inner_tol: float = Field(default=1e-8, gt=0)
    inner_max_iter: int = Field(default=50, ge=1)
    ridge_start: float = Field(default=1e-8, gt=0)
    ridge_max: float = Field(default=1e-2, gt=0)
    outer_gtol: float = Field(default=1e-5, gt=0)
    outer_max_iter: int = Field(default=500, ge=1)
    fd_step: float = Field(default=1e-5, gt=0)
    fd_workers: int = Field(default=1, ge=1)
    gradient: str = "central"
    variance_method: str = "fd_hessian"
    hessian_step: float = Field(default=1e-4, gt=0)
    warm_start: bool = True

    @field_validator("variance_method")
    @classmethod
    def _known_variance(cls, value: str) -> str:
        if value not in ("fd_hessian", "none"):
            raise ValueError(f"variance_method must be fd_hessian or none, got {value!r}")
        return value

    @field_validator("gradient")
    @classmethod
    def _known_gradient(cls, value: str) -> str:
        if value not in ("central", "forward"):
            raise ValueError(f"gradient must be central or forward, got {value!r}")
        return value


class ModelSettings(BaseModel):
    theta_source: str = "figure"
    reference_vessel: int = 1
    reference_catchability: float = Field(default=1.0, gt=0)
    catchability: CatchabilityModel = CatchabilityModel.NONE
    family: Family = Family.HURDLE
    enforce_vessel_source_rule: bool = True

    @field_validator("theta_source")
    @classmethod
    def _known_source(cls, value: str) -> str:
        if value not in ("figure", "text"):
            raise ValueError(f"theta_source must be figure or text, got {value!r}")
        return value


class HarnessSettings(BaseModel):
    master_seed: int = 42
    max_concurrent_replicates: int = Field(default=4, ge=1)
    variants: list[Variant] = Field(
        default_factory=lambda: [Variant.JOINT, Variant.FID_ONLY, Variant.FDD_ONLY]
    )
    output_dir: str = "runs"
    min_successes: int = Field(default=5, ge=1)


class Settings(BaseModel):
    """Application settings."""

    model_config = ConfigDict(extra="ignore")

    general: GeneralSettings = GeneralSettings()
    grid: GridSettings = GridSettings()
    inference: InferenceSettings = InferenceSettings()
    model: ModelSettings = ModelSettings()
    harness: HarnessSettings = HarnessSettings()


class ScaleProfile(BaseModel):
    """Named run size: grid, time points, replicates and sample-size combinations."""

    nx: int = Field(ge=2)
    ny: int = Field(ge=2)
    T: int = Field(ge=1)
    replicates: int = Field(ge=1)
    mesh_subsample: int = Field(default=1, ge=1)
    combs: list[tuple[int, int]] = Field(default_factory=lambda: [(100, 100)])


DEFAULT_SCALES = {
    "desk": ScaleProfile(nx=30, ny=30, T=2, replicates=20, mesh_subsample=2),
    "full": ScaleProfile(
        nx=60, ny=60, T=4, replicates=100,
        combs=[(100, 100), (100, 200), (100, 500), (200, 100)],
    ),
}


class ConfigManager:
    """Configuration manager with environment variable expansion."""

    def __init__(self, config_dir: Path):
        self.config_dir = Path(config_dir)
        self._settings: Settings | None = None
        self._scales: dict[str, ScaleProfile] | None = None

    def _expand_env_vars(self, value: Any) -> Any:
        """Expand environment variables in configuration values."""
        if isinstance(value, str):
            # Replace ${VAR} and ${VAR:-default} patterns
            def replace_var(match):
                var_expr = match.group(1)
                if ":-" in var_expr:
                    var_name, default = var_expr.split(":-", 1)
                    return os.getenv(var_name, default)
                return os.getenv(var_expr, match.group(0))

            return re.sub(r"\$\{([^}]+)\}", replace_var, value)
        elif isinstance(value, dict):
            return {k: self._expand_env_vars(v) for k, v in value.items()}
        elif isinstance(value, list):
            return [self._expand_env_vars(item) for item in value]
        return value

    def get_settings(self) -> Settings:
        """Get application settings."""
        if self._settings is None:
            settings_file = self.config_dir / "settings.toml"
            if settings_file.exists():
                with open(settings_file, "rb") as f:
                    data = tomllib.load(f)
                self._settings = Settings(**self._expand_env_vars(data))
            else:
                self._settings = Settings()
        return self._settings

    def get_scales(self) -> dict[str, ScaleProfile]:
        """Get run-size profiles, ``scales.yaml`` entries overriding the built-ins."""
        if self._scales is None:
            scales = dict(DEFAULT_SCALES)
            scales_file = self.config_dir / "scales.yaml"
            if scales_file.exists():
                with open(scales_file) as f:
                    data = self._expand_env_vars(yaml.safe_load(f) or {})
                for name, profile in (data.get("scales") or {}).items():
                    scales[name] = ScaleProfile(**profile)
            self._scales = scales
        return self._scales

    def get_scale(self, name: str) -> ScaleProfile:
        scales = self.get_scales()
        if name not in scales:
            raise KeyError(f"unknown scale profile {name!r}; known: {', '.join(sorted(scales))}")
        return scales[name]
