"""Replicate records and their file-backed, append-only store."""

import json
import os
import tempfile
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from rich.console import Console

from .metrics import relative_bias

console = Console()

RECORD_COLUMNS = [
    "scenario", "n_fid", "n_fdd", "replicate", "variant", "status", "quantity", "kind", "value",
]
BIAS_PREFIXES = ("beta[", "beta_prime[", "alpha_pp[", "theta[", "theta_prime[", "alpha", "delta")


class ReplicateStatus(str, Enum):
    OK = "ok"
    NOT_CONVERGED = "not_converged"
    FAILED = "failed"


class VariantOutcome(BaseModel):
    """One fitted variant of one replicate."""

    status: ReplicateStatus
    estimates: dict[str, float] = Field(default_factory=dict)
    standard_errors: dict[str, float] = Field(default_factory=dict)
    metrics: dict[str, float] = Field(default_factory=dict)
    message: str = ""


class ReplicateRecord(BaseModel):
    """Realized truth and fitted outcomes of one replicate."""

    scenario: int
    n_fid: int
    n_fdd: int
    replicate: int
    truth: dict[str, float] = Field(default_factory=dict)
    outcomes: dict[str, VariantOutcome] = Field(default_factory=dict)

    @property
    def stem(self) -> str:
        return f"s{self.scenario}_n{self.n_fid}-{self.n_fdd}_r{self.replicate:04d}"

    def _row(self, variant: str, status: str, quantity: str, kind: str, value: float) -> dict:
        return {
            "scenario": self.scenario, "n_fid": self.n_fid, "n_fdd": self.n_fdd,
            "replicate": self.replicate, "variant": variant, "status": status,
            "quantity": quantity, "kind": kind, "value": float(value),
        }

    def truth_rows(self) -> pd.DataFrame:
        rows = [self._row("truth", "ok", q, "truth", v) for q, v in self.truth.items()]
        return pd.DataFrame(rows, columns=RECORD_COLUMNS)

    def fit_rows(self) -> pd.DataFrame:
        rows = []
        for variant, outcome in self.outcomes.items():
            status = outcome.status.value
            if outcome.status is ReplicateStatus.FAILED:
                rows.append(self._row(variant, status, "error", "message", np.nan))
                continue
            for quantity, value in outcome.estimates.items():
                rows.append(self._row(variant, status, quantity, "estimate", value))
                truth = self.truth.get(quantity)
                if truth is not None and quantity.startswith(BIAS_PREFIXES):
                    bias, kind = relative_bias(value, truth)
                    rows.append(self._row(variant, status, quantity, kind, bias))
            for quantity, value in outcome.standard_errors.items():
                rows.append(self._row(variant, status, quantity, "se", value))
            for quantity, value in outcome.metrics.items():
                rows.append(self._row(variant, status, quantity, "metric", value))
        return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def _write_atomic(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as f:
            frame.to_csv(f, index=False, float_format="%.17g")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


class ReplicateStore:
    """File-backed replicate store: one truth and one fits file per replicate."""

    def __init__(self, base_path: Path):
        self.base_path = Path(base_path)
        self.replicates_dir = self.base_path / "replicates"
        self.replicates_dir.mkdir(parents=True, exist_ok=True)

    def truth_path(self, record: ReplicateRecord) -> Path:
        return self.replicates_dir / f"{record.stem}_truth.csv"

    def fits_path(self, record: ReplicateRecord) -> Path:
        return self.replicates_dir / f"{record.stem}_fits.csv"

    def is_complete(self, record: ReplicateRecord) -> bool:
        return self.fits_path(record).exists()

    def write_truth(self, record: ReplicateRecord) -> Path:
        """Written before any fit so realized truths survive interrupted runs."""
        return _write_atomic(record.truth_rows(), self.truth_path(record))

    def write_fits(self, record: ReplicateRecord) -> Path:
        path = _write_atomic(record.fit_rows(), self.fits_path(record))
        console.log(f"Stored replicate {record.stem}")
        return path

    def write_manifest(self, manifest: dict) -> Path:
        path = self.base_path / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        return path

    def read_manifest(self) -> dict:
        path = self.base_path / "manifest.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def load_records(self) -> pd.DataFrame:
        """All truth and fit rows under the store, in file-name order."""
        frames = []
        for path in sorted(self.replicates_dir.glob("*_truth.csv")) + sorted(
            self.replicates_dir.glob("*_fits.csv")
        ):
            try:
                frames.append(pd.read_csv(path, float_precision="round_trip"))
            except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
                console.log(f"Error loading records from {path}: {e}")
        if not frames:
            return pd.DataFrame(columns=RECORD_COLUMNS)
        return pd.concat(frames, ignore_index=True)[RECORD_COLUMNS]

    def get_counts(self) -> dict[str, int]:
        """Replicates with truth written, with fits written, and per-status fit counts."""
        counts = {
            "simulated": len(list(self.replicates_dir.glob("*_truth.csv"))),
            "completed": len(list(self.replicates_dir.glob("*_fits.csv"))),
        }
        records = self.load_records()
        fits = records[records["variant"] != "truth"].drop_duplicates(
            ["scenario", "n_fid", "n_fdd", "replicate", "variant"]
        )
        for status in ReplicateStatus:
            counts[status.value] = int((fits["status"] == status.value).sum())
        return counts
