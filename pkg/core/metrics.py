"""Prediction metrics, relative bias and replicate summaries."""

import json
import logging
import math
import re
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import gaussian_kde

from .errors import InvalidArgumentError, SummaryError

logger = logging.getLogger(__name__)

MIN_BINS = 10
MAX_BINS = 10_000
KDE_POINTS = 512
COVARIANCE_QUANTITIES = [
    "phi_U", "sigma2_U", "phi_V", "sigma2_V", "phi_W", "sigma2_W", "delta",
]
_PREFERENTIAL = re.compile(r"^(beta|beta_prime)\[\d+\]$")
_FIXED = re.compile(r"^(alpha|alpha_prime|theta|theta_prime)(\[\d+\])?$")


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise InvalidArgumentError(f"length mismatch: {pred.size} predictions, {truth.size} truths")
    if pred.size == 0:
        raise InvalidArgumentError("empty input")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def hellinger_from_masses(p, q) -> float:
    """sqrt(1 - sum sqrt(p_i q_i)) for normalized bin masses."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    bc = float(np.sum(np.sqrt(p * q)))
    return math.sqrt(max(0.0, 1.0 - bc))


def shared_bins(pooled: np.ndarray) -> np.ndarray:
    """Equal-width edges from the pooled Freedman-Diaconis rule, at least 10 bins."""
    lo, hi = float(pooled.min()), float(pooled.max())
    fd = np.histogram_bin_edges(pooled, bins="fd")
    count = min(max(fd.size - 1, MIN_BINS), MAX_BINS)
    return np.linspace(lo, hi, count + 1)


def hellinger(sample_a, sample_b) -> float:
    """Hellinger distance between two samples on a shared histogram."""
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidArgumentError("hellinger needs two nonempty samples")
    pooled = np.concatenate([a, b])
    if not np.all(np.isfinite(pooled)):
        raise InvalidArgumentError("samples must be finite")
    if pooled.min() == pooled.max():
        return 0.0
    edges = shared_bins(pooled)
    p = np.histogram(a, bins=edges)[0] / a.size
    q = np.histogram(b, bins=edges)[0] / b.size
    return hellinger_from_masses(p, q)


def relative_bias(estimate: float, truth: float) -> tuple[float, str]:
    """(estimate - truth) / truth, or the raw bias flagged ``absolute`` when truth is 0."""
    if truth == 0:
        return float(estimate), "absolute"
    return float((estimate - truth) / truth), "relative"


def kde_mode(values) -> float:
    """Argmax of a Silverman-bandwidth Gaussian KDE on a grid spanning the sample."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise InvalidArgumentError("kde_mode needs at least one finite value")
    lo, hi = float(values.min()), float(values.max())
    if values.size < 2 or hi - lo <= 1e-12 * max(1.0, abs(lo)):
        return float(np.median(values))
    grid = np.linspace(lo, hi, KDE_POINTS)
    try:
        density = gaussian_kde(values, bw_method="silverman")(grid)
    except np.linalg.LinAlgError:
        return float(np.median(values))
    return float(grid[int(np.argmax(density))])


class SummaryTable(BaseModel):
    """Replicate summaries per variant: preferential, covariance, fixed and metric tables."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    preferential: pd.DataFrame
    covariance: pd.DataFrame
    fixed: pd.DataFrame
    metrics: pd.DataFrame
    counts: dict[str, dict[str, int]] = Field(default_factory=dict)

    def write(self, out_dir: Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, frame in (
            ("table_preferential.csv", self.preferential),
            ("table_covariance.csv", self.covariance),
            ("table_fixed.csv", self.fixed),
            ("metrics.csv", self.metrics),
        ):
            path = out_dir / name
            frame.to_csv(path, index=False, float_format="%.6g")
            paths.append(path)
        summary = out_dir / "summary.json"
        summary.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default), encoding="utf-8")
        paths.append(summary)
        return paths

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "preferential": self.preferential.to_dict("records"),
            "covariance": self.covariance.to_dict("records"),
            "fixed": self.fixed.to_dict("records"),
            "metrics": self.metrics.to_dict("records"),
        }


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _interval(values: np.ndarray) -> tuple[float, float]:
    return float(np.quantile(values, 0.05)), float(np.quantile(values, 0.95))


def _successful(records: pd.DataFrame) -> tuple[pd.DataFrame, dict[str, dict[str, int]]]:
    fits = records[records["variant"] != "truth"]
    status = fits.drop_duplicates(["scenario", "n_fid", "n_fdd", "replicate", "variant"])
    counts: dict[str, dict[str, int]] = {}
    for variant, group in status.groupby("variant", sort=False):
        ok = int((group["status"] == "ok").sum())
        counts[str(variant)] = {"successes": ok, "failures": int(len(group) - ok)}
    return fits[fits["status"] == "ok"], counts


def summarize(records: pd.DataFrame, min_successes: int = 5) -> SummaryTable:
    """Summaries over converged replicates, one block per variant.

    Covariance parameters: KDE mode and 5%/95% quantiles of the estimates.
    Preferential loadings: median and 5%/95% quantiles of the relative bias.
    Fixed effects: median and quantiles of the estimates. Metrics: median,
    mean and quantiles.
    """
    ok, counts = _successful(records)
    for variant, c in counts.items():
        if c["successes"] < min_successes:
            raise SummaryError(c["successes"], c["failures"], min_successes)
    if not counts:
        raise SummaryError(0, 0, min_successes)

    group_keys = ["scenario", "n_fid", "n_fdd", "variant"]
    pref_rows, cov_rows, fixed_rows, metric_rows = [], [], [], []
    for key, group in ok.groupby(group_keys, sort=True):
        base = dict(zip(group_keys, key))
        estimates = group[group["kind"] == "estimate"]
        for quantity, sub in estimates.groupby("quantity", sort=False):
            values = sub["value"].to_numpy(dtype=float)
            values = values[np.isfinite(values)]
            if values.size == 0:
                continue
            lo, hi = _interval(values)
            if quantity in COVARIANCE_QUANTITIES:
                mode = kde_mode(values)
                cov_rows.append(
                    {**base, "quantity": quantity, "mode": mode, "q05": lo, "q95": hi,
                     "n": values.size, "mode_outside": not (lo <= mode <= hi)}
                )
            elif _FIXED.match(quantity):
                fixed_rows.append(
                    {**base, "quantity": quantity, "median": float(np.median(values)),
                     "q05": lo, "q95": hi, "n": values.size}
                )
        bias = group[group["kind"].isin(["relative", "absolute"])]
        for (quantity, kind), sub in bias.groupby(["quantity", "kind"], sort=False):
            if not _PREFERENTIAL.match(quantity):
                continue
            values = sub["value"].to_numpy(dtype=float)
            values = values[np.isfinite(values)]
            if values.size == 0:
                continue
            lo, hi = _interval(values)
            pref_rows.append(
                {**base, "quantity": quantity, "kind": kind, "median": float(np.median(values)),
                 "q05": lo, "q95": hi, "n": values.size}
            )
        metrics = group[group["kind"] == "metric"]
        for quantity, sub in metrics.groupby("quantity", sort=False):
            values = sub["value"].to_numpy(dtype=float)
            values = values[np.isfinite(values)]
            if values.size == 0:
                continue
            lo, hi = _interval(values)
            metric_rows.append(
                {**base, "metric": quantity, "median": float(np.median(values)),
                 "mean": float(np.mean(values)), "q05": lo, "q95": hi, "n": values.size}
            )

    return SummaryTable(
        preferential=pd.DataFrame(
            pref_rows, columns=[*group_keys, "quantity", "kind", "median", "q05", "q95", "n"]
        ),
        covariance=pd.DataFrame(
            cov_rows, columns=[*group_keys, "quantity", "mode", "q05", "q95", "n", "mode_outside"]
        ),
        fixed=pd.DataFrame(fixed_rows, columns=[*group_keys, "quantity", "median", "q05", "q95", "n"]),
        metrics=pd.DataFrame(
            metric_rows, columns=[*group_keys, "metric", "median", "mean", "q05", "q95", "n"]
        ),
        counts=counts,
    )
