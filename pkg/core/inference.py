"""Laplace-approximated marginal likelihood, outer fitting and prediction.

The latent vector is integrated out at its conditional mode (inner Newton);
the outer parameters are found by BFGS on the resulting marginal negative
log-likelihood.
"""

import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr
from scipy import optimize, sparse
from scipy.special import expit

from connectors.data.observations import ObservationSet

from .config import InferenceSettings
from .errors import ConditioningError, InnerFailureError, InvalidArgumentError, PrefsimError
from .factor import SparseFactor
from .fields import LatentState, MaternInterpretable, TemporalCorr, to_internal
from .gradients import PROVIDERS, BaseGradientProvider, finite_difference_hessian
from .grid import SpatialGrid, TimeAxis, project_between
from .hurdle import GammaDispersion
from .likelihood import LOG_2PI, JointObjective, ModelData, as_model_data, component_record
from .params import Family, JointParams, ModelSpec, ParameterLayout, default_params
from .sampling import PreferentialParams

logger = logging.getLogger(__name__)

PENALTY = 1e10
ARMIJO = 1e-4
MIN_STEP = 1e-10


@dataclass
class LaplaceResult:
    """Conditional mode of the latent vector and the marginal it implies."""

    mode: np.ndarray
    logdet: float
    joint_nll: float
    nll: float
    iterations: int
    gradient_norm: float
    converged: bool
    factor: SparseFactor | None = field(default=None, repr=False)
    objective: JointObjective | None = field(default=None, repr=False)

    def latent(self, n_nodes: int, T: int) -> LatentState:
        return LatentState.from_vector(self.mode, n_nodes, T)


def _newton_direction(
    h: sparse.spmatrix, g: np.ndarray, settings: InferenceSettings
) -> tuple[np.ndarray, SparseFactor]:
    ridge = 0.0
    eye = sparse.identity(h.shape[0], format="csc")
    while True:
        try:
            factor = SparseFactor(h + ridge * eye if ridge else h)
            return factor.solve(g), factor
        except ConditioningError:
            ridge = settings.ridge_start if ridge == 0.0 else ridge * 10.0
            if ridge > settings.ridge_max * (1 + 1e-9):
                raise InnerFailureError(
                    f"negative Hessian not positive definite after ridge {settings.ridge_max:g}"
                ) from None
            logger.debug("inner Hessian not positive definite; ridge %.0e", ridge)


def inner_optimize(
    params: JointParams,
    data: ModelData | ObservationSet,
    grid: SpatialGrid,
    time_axis: TimeAxis,
    start: LatentState | np.ndarray | None = None,
    settings: InferenceSettings | None = None,
    spec: ModelSpec | None = None,
    debug: bool = False,
) -> LaplaceResult:
    """Newton iterations with Armijo backtracking on the latent vector."""
    settings = settings or InferenceSettings()
    model_data = as_model_data(data, grid, time_axis, spec)
    objective = JointObjective(params, model_data, debug=debug)
    n_latent = model_data.n_latent

    x = np.zeros(n_latent)
    if start is not None:
        guess = start.to_vector() if isinstance(start, LatentState) else np.asarray(start, dtype=float)
        if guess.shape == (n_latent,) and np.all(np.isfinite(guess)):
            x = guess.copy()

    f = objective.value(x)
    g = objective.gradient(x)
    gnorm = float(np.max(np.abs(g))) if n_latent else 0.0
    iterations = 0
    converged = gnorm < settings.inner_tol
    while not converged and iterations < settings.inner_max_iter:
        h = objective.negative_hessian(x)
        step, _ = _newton_direction(h, g, settings)
        slope = -float(g @ step)
        t = 1.0
        while t >= MIN_STEP:
            trial = x - t * step
            f_trial = objective.value(trial)
            if np.isfinite(f_trial) and f_trial <= f + ARMIJO * t * slope:
                break
            t *= 0.5
        else:
            # no decrease available at working precision
            if -slope <= 1e-12 * (1.0 + abs(f)):
                converged = True
                break
            raise InnerFailureError(
                f"line search exhausted at inner iteration {iterations + 1} "
                f"(gradient norm {gnorm:.3g})",
                iterations=iterations,
            )
        x, f = trial, f_trial
        g = objective.gradient(x)
        gnorm = float(np.max(np.abs(g)))
        iterations += 1
        converged = gnorm < settings.inner_tol or (-slope <= 1e-14 * (1.0 + abs(f)))

    if not converged:
        logger.warning(
            "inner optimization stopped after %d iterations (gradient norm %.3g)", iterations, gnorm
        )
    h = objective.negative_hessian(x)
    try:
        factor = SparseFactor(h)
    except ConditioningError as e:
        raise InnerFailureError(f"negative Hessian at the mode is not positive definite: {e}",
                                iterations=iterations) from e
    nll = f + 0.5 * factor.logdet - 0.5 * n_latent * LOG_2PI
    return LaplaceResult(
        mode=x, logdet=factor.logdet, joint_nll=f, nll=float(nll), iterations=iterations,
        gradient_norm=gnorm, converged=converged, factor=factor, objective=objective,
    )


def laplace_marginal_nll(
    params: JointParams,
    data: ModelData | ObservationSet,
    grid: SpatialGrid,
    time_axis: TimeAxis,
    start: LatentState | np.ndarray | None = None,
    settings: InferenceSettings | None = None,
    spec: ModelSpec | None = None,
) -> float:
    """joint_nll(params, u_hat) + 1/2 log det H(u_hat) - (n_latent / 2) log(2 pi)."""
    return inner_optimize(params, data, grid, time_axis, start, settings, spec).nll


def default_init(data: ModelData) -> JointParams:
    """Neutral starting point for the outer optimization."""
    mesh, T = data.mesh, data.T
    matern = to_internal(MaternInterpretable(phi=mesh.width / 4.0, sigma=1.0))
    if data.spec.family is Family.GAUSSIAN:
        values = data.y
    else:
        values = data.y[data.positive]
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 1.0
    if not (np.isfinite(sd) and sd > 0):
        sd = 1.0
    counts = data.fdd_counts_by_time()
    area = mesh.domain_area
    base = default_params(T, data.n_theta_prime, data.n_theta)
    return base.model_copy(
        update={
            "dispersion": GammaDispersion(log_upsilon=math.log(sd)),
            "catchability": base.catchability.model_copy(
                update={"fixed_terms": [0.0] * data.n_theta_c, "vessels": list(data.vessel_ids)}
            ),
            "preferential": PreferentialParams(
                alpha_pp=[math.log(max(int(c), 1) / area) for c in counts],
                beta_prime=[0.0] * T,
                beta=[0.0] * T,
            ),
            "u": matern,
            "v": matern,
            "w": matern,
            "temporal": TemporalCorr(delta_star=0.0),
        }
    )


class FitReport(BaseModel):
    """Outcome of one fit; serializable to JSON."""

    model_config = ConfigDict(arbitrary_types_allowed=True, ser_json_inf_nan="constants")

    spec: ModelSpec
    names: list[str]
    estimates: dict[str, float]
    interpretable: dict[str, float]
    standard_errors: dict[str, float]
    params: JointParams
    loglik: float
    n_params: int
    aic: float
    converged: bool
    status: int = 0
    message: str = ""
    iterations: int = 0
    gradient_norm: float = float("nan")
    hessian_pd: bool = False
    components: dict[str, float] = Field(default_factory=dict)
    elapsed_seconds: float = 0.0
    mesh: SpatialGrid
    time_axis: TimeAxis
    latent_mode: list[float] = Field(default_factory=list)
    presence_columns: list[str] = Field(default_factory=list)
    biomass_columns: list[str] = Field(default_factory=list)
    knots: dict[str, list[float]] = Field(default_factory=dict)
    vessel_ids: list[int] = Field(default_factory=list)

    _laplace: LaplaceResult | None = PrivateAttr(default=None)

    @property
    def nll(self) -> float:
        return -self.loglik

    def latent(self) -> LatentState:
        return LatentState.from_vector(np.asarray(self.latent_mode), self.mesh.n_nodes, self.time_axis.T)

    def to_json(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path

    @classmethod
    def from_json(cls, path: Path) -> "FitReport":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _json_float(value: float) -> float:
    return float(value) if np.isfinite(value) else float("nan")


class _Marginal:
    """Memoized marginal nll over the packed outer vector, warm-started at the last centre."""

    def __init__(self, layout: ParameterLayout, template: JointParams, data: ModelData,
                 settings: InferenceSettings, debug: bool = False):
        self.layout = layout
        self.template = template
        self.data = data
        self.settings = settings
        self.debug = debug
        self.warm: np.ndarray | None = None
        self.failures = 0
        self._cache: dict[bytes, LaplaceResult | None] = {}
        self._lock = threading.Lock()

    def laplace(self, x: np.ndarray) -> LaplaceResult | None:
        key = np.asarray(x, dtype=float).tobytes()
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        try:
            params = self.layout.unpack(x, self.template)
            result = inner_optimize(
                params, self.data, self.data.mesh, self.data.time_axis,
                start=self.warm if self.settings.warm_start else None,
                settings=self.settings, debug=self.debug,
            )
            if not np.isfinite(result.nll):
                result = None
        except (PrefsimError, ValueError, FloatingPointError) as e:
            logger.debug("marginal evaluation failed: %s", e)
            result = None
        with self._lock:
            if result is None:
                self.failures += 1
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = result
        return result

    def __call__(self, x: np.ndarray) -> float:
        result = self.laplace(x)
        return PENALTY if result is None else result.nll

    def centre(self, x: np.ndarray) -> LaplaceResult | None:
        result = self.laplace(x)
        if result is not None:
            self.warm = result.mode
        return result


def _provider(settings: InferenceSettings) -> BaseGradientProvider:
    return PROVIDERS[settings.gradient](step=settings.fd_step, workers=settings.fd_workers)


def fit(
    data: ModelData | ObservationSet,
    grid: SpatialGrid,
    time_axis: TimeAxis,
    init: JointParams | None = None,
    config: InferenceSettings | None = None,
    spec: ModelSpec | None = None,
    provider: BaseGradientProvider | None = None,
    debug: bool = False,
) -> FitReport:
    """Maximize the Laplace marginal likelihood over the outer parameters.

    Non-convergence is reported through ``converged``/``message``, never raised.
    """
    started = time.perf_counter()
    settings = config or InferenceSettings()
    model_data = as_model_data(data, grid, time_axis, spec)
    layout = ParameterLayout.build(
        model_data.spec, model_data.T, model_data.n_theta_prime, model_data.n_theta,
        model_data.n_theta_c, model_data.has_dispersion,
    )
    template = init or default_init(model_data)
    if (
        len(template.fixed.theta_prime) != model_data.n_theta_prime
        or len(template.fixed.theta) != model_data.n_theta
    ):
        raise InvalidArgumentError("initial coefficients do not match the design widths")
    if template.T != model_data.T:
        raise InvalidArgumentError(f"initial parameters are for T={template.T}, data has T={model_data.T}")
    x0 = layout.pack(template)
    if not np.all(np.isfinite(x0)):
        raise InvalidArgumentError("initial parameters must be finite")

    provider = provider or _provider(settings)
    marginal = _Marginal(layout, template, model_data, settings, debug)

    def jac(x: np.ndarray) -> np.ndarray:
        centre = marginal.centre(x)
        fx = PENALTY if centre is None else centre.nll
        return provider.gradient(marginal, x, fx)

    first = marginal.centre(x0)
    if first is None:
        return _report(
            layout, template, model_data, None, x0, settings, provider, marginal,
            converged=False, status=-1, message="inner optimization failed at the initial point",
            iterations=0, gradient_norm=float("nan"), started=started,
        )

    result = optimize.minimize(
        marginal, x0, jac=jac, method="BFGS",
        options={"gtol": settings.outer_gtol, "maxiter": settings.outer_max_iter},
    )
    x_hat = np.asarray(result.x, dtype=float)
    best = marginal.centre(x_hat)
    message = str(result.message)
    if best is None or best.nll > first.nll:
        # optimizer ended above the start; judge convergence at the start
        x_hat, best = x0, first
        marginal.warm = first.mode
        grad = np.asarray(provider.gradient(marginal, x0, first.nll), dtype=float)
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        converged = gnorm < settings.outer_gtol
        message += "; kept the initial point, the optimizer ended above it"
    else:
        grad = np.asarray(getattr(result, "jac", np.full(x_hat.size, np.nan)), dtype=float)
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        converged = bool(result.success) or gnorm < settings.outer_gtol
    if marginal.failures:
        message += f" ({marginal.failures} trial points failed the inner optimization)"
    return _report(
        layout, template, model_data, best, x_hat, settings, provider, marginal,
        converged=converged, status=int(result.status), message=message,
        iterations=int(result.nit), gradient_norm=gnorm, started=started,
    )


def _report(
    layout: ParameterLayout,
    template: JointParams,
    data: ModelData,
    laplace: LaplaceResult | None,
    x_hat: np.ndarray,
    settings: InferenceSettings,
    provider: BaseGradientProvider,
    marginal: _Marginal,
    converged: bool,
    status: int,
    message: str,
    iterations: int,
    gradient_norm: float,
    started: float,
) -> FitReport:
    params = layout.unpack(x_hat, template)
    k = layout.size
    nll = laplace.nll if laplace is not None else float("nan")

    standard_errors = {name: float("nan") for name in layout.names}
    hessian_pd = False
    if laplace is not None and settings.variance_method == "fd_hessian":
        marginal.warm = laplace.mode
        hess = finite_difference_hessian(marginal, x_hat, provider, step=settings.hessian_step)
        try:
            np.linalg.cholesky(hess)
            hessian_pd = True
            cov = np.linalg.inv(hess)
            se = np.sqrt(np.diag(cov))
            standard_errors = dict(zip(layout.names, (float(s) for s in se)))
        except np.linalg.LinAlgError:
            logger.warning("outer Hessian is not positive definite; standard errors unavailable")

    components = {}
    latent_mode: list[float] = []
    if laplace is not None:
        components = laplace.objective.components(laplace.mode)
        latent_mode = laplace.mode.tolist()

    report = FitReport(
        spec=data.spec,
        names=layout.names,
        estimates=dict(zip(layout.names, (float(v) for v in x_hat))),
        interpretable=layout.interpretable(params),
        standard_errors={k_: _json_float(v) for k_, v in standard_errors.items()},
        params=params,
        loglik=-nll,
        n_params=k,
        aic=2.0 * k + 2.0 * nll,
        converged=converged and laplace is not None,
        status=status,
        message=message,
        iterations=iterations,
        gradient_norm=_json_float(gradient_norm),
        hessian_pd=hessian_pd,
        components=components,
        elapsed_seconds=time.perf_counter() - started,
        mesh=data.mesh,
        time_axis=data.time_axis,
        latent_mode=latent_mode,
        presence_columns=data.design.presence_columns,
        biomass_columns=data.design.biomass_columns,
        knots=data.design.knots,
        vessel_ids=data.vessel_ids,
    )
    report._laplace = laplace
    logger.info(
        "fit finished: nll=%.6g k=%d converged=%s (%.1fs)",
        nll, k, report.converged, report.elapsed_seconds,
    )
    return report


def aic(report: FitReport) -> float:
    return 2.0 * report.n_params - 2.0 * report.loglik


def compare_models(reports: dict[str, FitReport]) -> pd.DataFrame:
    """Rank fitted variants by AIC."""
    rows = [
        {"model": name, "k": r.n_params, "loglik": r.loglik, "aic": aic(r), "converged": r.converged}
        for name, r in reports.items()
    ]
    frame = pd.DataFrame(rows, columns=["model", "k", "loglik", "aic", "converged"])
    frame = frame.sort_values("aic", kind="stable").reset_index(drop=True)
    frame["delta_aic"] = frame["aic"] - frame["aic"].min()
    return frame


class SurfacePrediction(BaseModel):
    """Per node and time: presence probability, mean biomass and their product."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    node_ids: np.ndarray
    coords: np.ndarray
    time_labels: list[str]
    pi: np.ndarray
    pi_se: np.ndarray
    mu: np.ndarray
    mu_se: np.ndarray

    @property
    def expected(self) -> np.ndarray:
        return self.pi * self.mu

    def to_frame(self) -> pd.DataFrame:
        n, T = self.pi.shape
        return pd.DataFrame(
            {
                "node_id": np.tile(self.node_ids, T),
                "x": np.tile(self.coords[:, 0], T),
                "y": np.tile(self.coords[:, 1], T),
                "t": np.repeat(self.time_labels, n),
                "pi": self.pi.T.ravel(),
                "pi_se": self.pi_se.T.ravel(),
                "mu": self.mu.T.ravel(),
                "mu_se": self.mu_se.T.ravel(),
                "expected": self.expected.T.ravel(),
            }
        )


def _node_design(design: np.ndarray | None, n: int, p: int, T: int) -> np.ndarray:
    """Broadcast a node design to (T, n, p); ``None`` means zero covariates."""
    if design is None:
        return np.zeros((T, n, p))
    design = np.asarray(design, dtype=float)
    if design.ndim == 2:
        design = np.broadcast_to(design, (T, *design.shape))
    if design.shape != (T, n, p):
        raise InvalidArgumentError(f"node design has shape {design.shape}, expected {(T, n, p)}")
    return design


def predict_surface(
    report: FitReport,
    grid: SpatialGrid | None = None,
    time_axis: TimeAxis | None = None,
    presence_design: np.ndarray | None = None,
    biomass_design: np.ndarray | None = None,
    with_se: bool = True,
    data: ModelData | None = None,
) -> SurfacePrediction:
    """Expected relative biomass pi * mu at the interior nodes of ``grid``.

    Standard errors use the delta method on the linear predictors with latent
    conditional variances from the factorized negative Hessian at the mode.
    ``data`` lets a report loaded from JSON rebuild that factorization.
    """
    mesh = report.mesh
    grid = grid or mesh
    time_axis = time_axis or report.time_axis
    T = report.time_axis.T
    if time_axis.T != T:
        raise InvalidArgumentError(f"report has T={T}, prediction asked for T={time_axis.T}")
    n = mesh.n_nodes
    x = np.asarray(report.latent_mode, dtype=float)
    u, v, w = x[:n], x[n : 2 * n], x[2 * n : (2 + T) * n].reshape(T, n)

    link = project_between(mesh, grid).matrix
    targets = grid.interior_indices
    m = targets.size
    p = report.params.fixed
    x_pres = _node_design(presence_design, m, len(p.theta_prime), T)
    x_bio = _node_design(biomass_design, m, len(p.theta), T)

    eta_p = np.empty((m, T))
    eta_b = np.empty((m, T))
    for t in range(T):
        eta_p[:, t] = p.alpha_prime + x_pres[t] @ np.asarray(p.theta_prime) + link @ (v + w[t])
        eta_b[:, t] = p.alpha + x_bio[t] @ np.asarray(p.theta) + link @ (u + w[t])

    var_p = np.full((m, T), np.nan)
    var_b = np.full((m, T), np.nan)
    factor = _prediction_factor(report, data) if with_se else None
    if factor is not None:
        n_latent = x.size
        coo = link.tocoo()
        for t in range(T):
            w_rows = 2 * n + t * n + coo.col
            for offset, out in ((n, var_p), (0, var_b)):
                rows = np.concatenate([offset + coo.col, w_rows])
                cols = np.concatenate([coo.row, coo.row])
                vals = np.concatenate([coo.data, coo.data])
                b = sparse.csc_matrix((vals, (rows, cols)), shape=(n_latent, m))
                out[:, t] = factor.quadratic_inverse(b)

    if report.spec.family is Family.GAUSSIAN:
        pi = np.ones((m, T))
        pi_se = np.zeros((m, T))
        mu = eta_b
        mu_se = np.sqrt(var_b)
    else:
        pi = expit(eta_p)
        pi_se = pi * (1.0 - pi) * np.sqrt(var_p)
        mu = np.exp(eta_b)
        mu_se = mu * np.sqrt(var_b)
    return SurfacePrediction(
        node_ids=targets,
        coords=grid.node_coords[targets],
        time_labels=list(time_axis.labels),
        pi=pi, pi_se=pi_se, mu=mu, mu_se=mu_se,
    )


def _prediction_factor(report: FitReport, data: ModelData | None) -> SparseFactor | None:
    if report._laplace is not None and report._laplace.factor is not None:
        return report._laplace.factor
    if data is None:
        logger.warning("report has no live factorization and no data was given; standard errors are NaN")
        return None
    objective = JointObjective(report.params, data)
    return SparseFactor(objective.negative_hessian(np.asarray(report.latent_mode, dtype=float)))


def write_components(report: FitReport, path: Path) -> Path:
    """Per-component log-likelihoods at the optimum, with the total negative log-likelihood."""
    path = Path(path)
    record = component_record(report.components)
    path.write_text(json.dumps(record, indent=2), encoding="utf-8")
    return path
