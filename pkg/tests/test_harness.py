"""Tests for the simulation-estimation experiment."""

import asyncio
import tempfile
from functools import lru_cache
from pathlib import Path
from unittest.mock import patch

import pandas as pd
import pytest

from core.config import DEFAULT_SCALES, InferenceSettings
from core.harness import ExperimentRunner, build_report, run_experiment, run_replicate
from core.metrics import summarize
from core.params import Variant
from core.records import ReplicateRecord, ReplicateStatus, ReplicateStore, VariantOutcome
from core.scenarios import GridSpec, scenario_preset

FAST = InferenceSettings(outer_max_iter=3, variance_method="none")


def _tiny_config(replicates: int = 2):
    return scenario_preset(
        1, T=1, rng_seed=3, comb=(15, 15), replicates=replicates,
        grid=GridSpec(nx=8, ny=8, pad_fraction=0.25, mesh_subsample=2),
    )


class TestRunReplicate:
    """Test a single replicate without a store."""

    def test_outcomes_per_variant(self):
        record = run_replicate(_tiny_config(), 0, [Variant.JOINT, Variant.FID_ONLY], inference=FAST)
        assert set(record.outcomes) == {"joint", "fid_only"}
        assert "beta[1]" in record.truth
        for outcome in record.outcomes.values():
            if outcome.status is not ReplicateStatus.FAILED:
                assert {"rmse", "mae", "hellinger", "aic"} <= set(outcome.metrics)


class TestExperiment:
    """Test persistence, resume and crash recording."""

    def setup_method(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.out = Path(self.temp_dir.name)

    def teardown_method(self):
        self.temp_dir.cleanup()

    def test_run_and_resume(self):
        config = _tiny_config()
        records = run_experiment(config, ["joint", "fid"], self.out, inference=FAST)
        fits = records[records["variant"] != "truth"]
        assert set(fits["variant"]) == {"joint", "fid_only"}
        assert set(fits["replicate"]) == {0, 1}
        store = ReplicateStore(self.out)
        assert store.get_counts()["completed"] == 2
        assert store.read_manifest()["variants"] == ["joint", "fid_only"]

        runner = ExperimentRunner(self.out, inference=FAST)
        assert runner.pending(config) == []
        assert asyncio.run(runner.run(config, [Variant.JOINT])) == []

    @patch("core.harness.run_replicate")
    def test_crash_is_recorded_as_failure(self, mock_run):
        mock_run.side_effect = RuntimeError("worker died")
        config = _tiny_config(replicates=1)
        runner = ExperimentRunner(self.out)
        records = asyncio.run(runner.run(config, [Variant.JOINT]))
        assert records[0].outcomes["joint"].status is ReplicateStatus.FAILED
        assert records[0].outcomes["joint"].message == "worker died"
        assert runner.pending(config) == []


class TestBuildReport:
    """Test report files written from stored records."""

    def test_report_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            store = ReplicateStore(Path(tmp))
            for r in range(5):
                record = ReplicateRecord(
                    scenario=1, n_fid=15, n_fdd=15, replicate=r,
                    truth={"beta[1]": 2.0},
                    outcomes={"joint": VariantOutcome(
                        status=ReplicateStatus.OK,
                        estimates={"beta[1]": 1.8 + 0.1 * r, "phi_U": 0.2 + 0.01 * r},
                        metrics={"rmse": 0.5},
                    )},
                )
                store.write_truth(record)
                store.write_fits(record)
            table = build_report(Path(tmp))
            assert (Path(tmp) / "table_preferential.csv").exists()
            assert (Path(tmp) / "summary.json").exists()
        assert table.counts["joint"]["successes"] == 5
        assert table.preferential["median"].iloc[0] == pytest.approx(0.0, abs=1e-12)


def _desk_config(scenario: int):
    desk = DEFAULT_SCALES["desk"]
    return scenario_preset(
        scenario, T=desk.T, rng_seed=42, comb=desk.combs[0], replicates=desk.replicates,
        grid=GridSpec(nx=desk.nx, ny=desk.ny, mesh_subsample=desk.mesh_subsample),
    )


@lru_cache(maxsize=None)
def _desk_records(scenario: int) -> pd.DataFrame:
    return run_experiment(_desk_config(scenario), max_concurrent=4)


def _ok_rows(records: pd.DataFrame, variant: str, quantity: str, kind: str) -> pd.Series:
    rows = records[
        (records["variant"] == variant) & (records["status"] == "ok")
        & (records["quantity"] == quantity) & (records["kind"] == kind)
    ]
    return rows.set_index("replicate")["value"]


@pytest.mark.slow
class TestDeskScaleRecovery:
    """Desk-scale runs: 30x30 grid, T=2, 20 replicates at Comb(100,100)."""

    def test_scenario_2_preferential_bias(self):
        table = summarize(_desk_records(2))
        joint = table.preferential[table.preferential["variant"] == "joint"]
        for t in (1, 2):
            beta_prime = joint[(joint["quantity"] == f"beta_prime[{t}]") & (joint["kind"] == "relative")]
            assert -0.6 <= beta_prime["median"].iloc[0] <= 0.4
            beta = joint[(joint["quantity"] == f"beta[{t}]") & (joint["kind"] == "absolute")]
            assert -0.4 <= beta["median"].iloc[0] <= 0.4

    def test_scenario_2_temporal_correlation_mode(self):
        table = summarize(_desk_records(2))
        cov = table.covariance
        delta = cov[(cov["variant"] == "joint") & (cov["quantity"] == "delta")]
        assert 0.60 <= delta["mode"].iloc[0] <= 0.95

    def test_scenario_1_preferential_signal_detected(self):
        records = _desk_records(1)
        detected, total = 0, 0
        for t in (1, 2):
            estimate = _ok_rows(records, "joint", f"beta[{t}]", "estimate")
            se = _ok_rows(records, "joint", f"beta[{t}]", "se").reindex(estimate.index)
            detected += int(((estimate > 0) & (estimate > 2.0 * se)).sum())
            total += len(estimate)
        assert total >= 2 * 5
        assert detected >= 0.8 * total

    def test_scenario_3_joint_hellinger_is_lowest(self):
        metrics = summarize(_desk_records(3)).metrics
        hellinger = metrics[metrics["metric"] == "hellinger"].set_index("variant")["median"]
        assert hellinger["joint"] <= hellinger["fid_only"]
        assert hellinger["joint"] <= hellinger["fdd_only"]

    def test_same_seed_gives_identical_records(self):
        first = _desk_records(2)
        with tempfile.TemporaryDirectory() as tmp:
            second = run_experiment(_desk_config(2), out_dir=Path(tmp), max_concurrent=4)
        pd.testing.assert_frame_equal(first, second, check_exact=True)
