"""Simulation-estimation experiment: replicates x variants, persisted as they finish."""

import asyncio
import logging
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import pandas as pd
from rich.console import Console

from .config import InferenceSettings, ModelSettings
from .errors import PrefsimError
from .inference import fit, predict_surface
from .likelihood import ModelData
from .metrics import SummaryTable, hellinger, mae, rmse, summarize
from .params import ModelSpec, Variant
from .records import ReplicateRecord, ReplicateStatus, ReplicateStore, VariantOutcome
from .scenarios import ScenarioConfig
from .simulate import simulate_replicate

console = Console()
logger = logging.getLogger(__name__)


def _fit_variant(sim, mesh, design, node_designs, variant: Variant,
                 inference: InferenceSettings, model: ModelSettings) -> VariantOutcome:
    spec = ModelSpec.for_variant(variant, family=model.family, catchability=model.catchability)
    data = ModelData(
        sim.observations, mesh, sim.time_axis, spec=spec, design=design,
        reference_vessel=model.reference_vessel, reference_value=model.reference_catchability,
    )
    report = fit(data, mesh, sim.time_axis, config=inference)
    prediction = predict_surface(
        report, sim.grid, sim.time_axis,
        presence_design=node_designs[0], biomass_design=node_designs[1], with_se=False,
    )
    truth = sim.truth_surface
    expected = prediction.expected
    metrics = {
        "rmse": rmse(expected, truth),
        "mae": mae(expected, truth),
        "hellinger": hellinger(expected.ravel(), truth.ravel()),
        "aic": report.aic,
        "nll": report.nll,
        "outer_iterations": float(report.iterations),
    }
    logger.debug("%s fit took %.1fs", variant.value, report.elapsed_seconds)
    return VariantOutcome(
        status=ReplicateStatus.OK if report.converged else ReplicateStatus.NOT_CONVERGED,
        estimates={**report.estimates, **report.interpretable},
        standard_errors=report.standard_errors,
        metrics=metrics,
        message=report.message,
    )


def run_replicate(
    config: ScenarioConfig,
    replicate: int,
    variants: list[Variant],
    out_dir: str | None = None,
    inference: InferenceSettings | None = None,
    model: ModelSettings | None = None,
) -> ReplicateRecord:
    """Simulate one replicate, record its truth, then fit every variant."""
    inference = inference or InferenceSettings()
    model = model or ModelSettings()
    store = ReplicateStore(Path(out_dir)) if out_dir else None
    sim = simulate_replicate(config, replicate)
    record = ReplicateRecord(
        scenario=config.scenario, n_fid=config.n_fid, n_fdd=config.n_fdd,
        replicate=replicate, truth=sim.truth_values(),
    )
    if store:
        store.write_truth(record)

    mesh = config.grid.build_mesh()
    design = sim.design()
    node_designs = sim.node_designs()
    for variant in variants:
        try:
            outcome = _fit_variant(sim, mesh, design, node_designs, variant, inference, model)
        except PrefsimError as e:
            logger.warning("replicate %d, %s: %s", replicate, variant.value, e)
            outcome = VariantOutcome(status=ReplicateStatus.FAILED, message=str(e))
        record.outcomes[variant.value] = outcome

    if store:
        store.write_fits(record)
    return record


class ExperimentRunner:
    """Runs the replicates of one scenario concurrently on a bounded process pool."""

    def __init__(
        self,
        base_path: Path,
        inference: InferenceSettings | None = None,
        model: ModelSettings | None = None,
        max_concurrent: int = 1,
    ):
        self.base_path = Path(base_path)
        self.store = ReplicateStore(self.base_path)
        self.inference = inference or InferenceSettings()
        self.model = model or ModelSettings()
        self.max_concurrent = max(1, int(max_concurrent))

    def pending(self, config: ScenarioConfig) -> list[int]:
        """Replicate indices without a fits file."""
        todo = []
        for r in range(config.replicates):
            probe = ReplicateRecord(
                scenario=config.scenario, n_fid=config.n_fid, n_fdd=config.n_fdd, replicate=r
            )
            if not self.store.is_complete(probe):
                todo.append(r)
        return todo

    async def run(self, config: ScenarioConfig, variants: list[Variant]) -> list[ReplicateRecord]:
        """Run every pending replicate; completed ones are skipped."""
        loop = asyncio.get_running_loop()
        self.store.write_manifest(
            {"config": config.model_dump(mode="json"), "variants": [v.value for v in variants]}
        )
        pending = self.pending(config)
        skipped = config.replicates - len(pending)
        console.log(
            f"Scenario {config.scenario} Comb({config.n_fid},{config.n_fdd}): "
            f"{len(pending)} replicates to run, {skipped} already complete"
        )
        if not pending:
            return []

        args = (variants, str(self.base_path), self.inference, self.model)
        if self.max_concurrent == 1:
            return [await self._run_inline(config, r, args) for r in pending]

        semaphore = asyncio.Semaphore(self.max_concurrent)
        with ProcessPoolExecutor(max_workers=self.max_concurrent) as pool:

            async def one(r: int) -> ReplicateRecord | None:
                async with semaphore:
                    try:
                        return await loop.run_in_executor(pool, run_replicate, config, r, *args)
                    except Exception as e:
                        return self._record_crash(config, r, variants, e)

            results = await asyncio.gather(*(one(r) for r in pending))
        return [r for r in results if r is not None]

    async def _run_inline(self, config: ScenarioConfig, r: int, args) -> ReplicateRecord:
        try:
            return run_replicate(config, r, *args)
        except Exception as e:
            return self._record_crash(config, r, args[0], e)

    def _record_crash(
        self, config: ScenarioConfig, r: int, variants: list[Variant], error: Exception
    ) -> ReplicateRecord:
        console.log(f"Error in replicate {r}: {error}")
        record = ReplicateRecord(
            scenario=config.scenario, n_fid=config.n_fid, n_fdd=config.n_fdd, replicate=r,
            outcomes={
                v.value: VariantOutcome(status=ReplicateStatus.FAILED, message=str(error))
                for v in variants
            },
        )
        self.store.write_fits(record)
        return record


def run_experiment(
    config: ScenarioConfig,
    variants: list[Variant | str] | None = None,
    out_dir: Path | None = None,
    inference: InferenceSettings | None = None,
    model: ModelSettings | None = None,
    max_concurrent: int = 1,
) -> pd.DataFrame:
    """Run (or resume) every replicate and return all long-format records."""
    variants = [
        v if isinstance(v, Variant) else Variant.parse(v)
        for v in (variants or [Variant.JOINT, Variant.FID_ONLY, Variant.FDD_ONLY])
    ]
    out_dir = Path(out_dir) if out_dir else Path(tempfile.mkdtemp(prefix="prefsim-"))
    runner = ExperimentRunner(out_dir, inference, model, max_concurrent)
    asyncio.run(runner.run(config, variants))
    return runner.store.load_records()


def build_report(base_path: Path, min_successes: int = 5) -> SummaryTable:
    """Summarize every record under ``base_path`` and write the report files next to it."""
    store = ReplicateStore(Path(base_path))
    table = summarize(store.load_records(), min_successes=min_successes)
    for path in table.write(store.base_path):
        console.log(f"Wrote {path}")
    return table
