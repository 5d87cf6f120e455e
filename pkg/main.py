#!/usr/bin/env python3
"""Main entry point for prefsim."""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

from dotenv import find_dotenv, load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

console = Console()

COMMANDS = {
    "simulate": "Simulate replicates of a scenario and write their observations",
    "fit": "Fit the joint model to an observation file",
    "replicate": "Run the simulation-estimation experiment",
    "report": "Summarize a run directory into tables",
    "validate": "Check an observation file and print its data summary",
    "status": "Show run-directory progress",
}


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _comb(value: str) -> tuple[int, int]:
    try:
        n_fid, n_fdd = (int(v) for v in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NI,ND, got {value!r}") from None
    return n_fid, n_fdd


def _grid_size(value: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in value.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NXxNY, got {value!r}") from None
    return nx, ny


def _parser(command: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f"prefsim {command}", description=COMMANDS[command])
    if command in ("simulate", "replicate"):
        parser.add_argument("--scenario", type=int, required=True, choices=[1, 2, 3])
        parser.add_argument("--comb", type=_comb, default=None, help="NI,ND per time")
        parser.add_argument("--replicates", type=int, default=None)
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--grid", type=_grid_size, default=None, help="NXxNY")
        parser.add_argument("--T", type=int, default=None, dest="T")
        parser.add_argument("--theta-source", choices=["figure", "text"], default=None)
        parser.add_argument("--paper-scale", "--full-scale", action="store_true", dest="full_scale")
        parser.add_argument("--out", type=Path, required=True)
    if command == "replicate":
        parser.add_argument("--variants", default="joint,fid,fdd")
        parser.add_argument("--workers", type=int, default=None)
    if command == "fit":
        parser.add_argument("--data", type=Path, required=True)
        parser.add_argument("--covariates", type=Path, default=None)
        parser.add_argument("--daily", type=Path, default=None)
        parser.add_argument("--vessels", type=Path, default=None)
        parser.add_argument("--init", type=Path, default=None)
        parser.add_argument("--grid", type=_grid_size, default=None, help="NXxNY")
        parser.add_argument("--variant", default="joint")
        parser.add_argument("--catchability", default=None)
        parser.add_argument("--family", default=None)
        parser.add_argument("--surface", type=Path, default=None)
        parser.add_argument("--out", type=Path, required=True)
    if command == "validate":
        parser.add_argument("--data", type=Path, required=True)
        parser.add_argument("--covariates", type=Path, default=None)
    if command in ("report", "status"):
        parser.add_argument("dir", type=Path)
    if command == "status":
        parser.add_argument("--watch", action="store_true")
    return parser


async def main():
    """Main entry point with command routing."""
    if len(sys.argv) < 2 or sys.argv[1] not in COMMANDS:
        if len(sys.argv) >= 2:
            console.log(f"Unknown command: {sys.argv[1]}")
        console.log("prefsim - preferential-sampling joint model: simulation and inference")
        console.log("")
        console.log("Usage: prefsim <command> [args...]")
        console.log("")
        console.log("Commands:")
        for name, help_text in COMMANDS.items():
            console.log(f"  {name:<10} - {help_text}")
        if len(sys.argv) >= 2:
            sys.exit(1)
        return

    _ = load_dotenv(find_dotenv(usecwd=True), override=False)
    from core.config import ConfigManager

    command = sys.argv[1]
    args = _parser(command).parse_args(sys.argv[2:])
    base_path = Path.cwd()
    config_manager = ConfigManager(base_path / "config")

    from core.errors import PrefsimError

    try:
        settings = config_manager.get_settings()
        _setup_logging(settings.general.log_level)
        if command == "simulate":
            await run_simulate(args, config_manager)
        elif command == "fit":
            await run_fit(args, config_manager)
        elif command == "replicate":
            await run_replicate_command(args, config_manager)
        elif command == "report":
            await run_report(args, config_manager)
        elif command == "validate":
            await run_validate(args, config_manager)
        elif command == "status":
            await show_status(args)

    except KeyboardInterrupt:
        console.log("Interrupted by user")
    except PrefsimError as e:
        console.log(f"Error: {e}")
        sys.exit(1)
    except Exception as e:
        console.log(f"Error running {command}: {e}")
        sys.exit(1)


def _scenario_config(args, config_manager):
    """ScenarioConfig from CLI flags over the selected scale profile."""
    from core.scenarios import GridSpec, scenario_preset

    settings = config_manager.get_settings()
    scale = config_manager.get_scale("full" if args.full_scale else "desk")
    nx, ny = args.grid or (scale.nx, scale.ny)
    g = settings.grid
    grid = GridSpec(
        nx=nx, ny=ny, bounds=(g.xmin, g.xmax, g.ymin, g.ymax),
        pad_fraction=g.pad_fraction,
        mesh_subsample=scale.mesh_subsample if args.grid is None else g.mesh_subsample,
    )
    return scenario_preset(
        args.scenario,
        T=args.T or scale.T,
        rng_seed=args.seed if args.seed is not None else settings.harness.master_seed,
        comb=args.comb or scale.combs[0],
        theta_source=args.theta_source or settings.model.theta_source,
        replicates=args.replicates or scale.replicates,
        grid=grid,
    )


async def run_simulate(args, config_manager):
    """Write each replicate's observations and realized truth."""
    from connectors.data.observations import write_observations
    from core.records import ReplicateRecord, ReplicateStore
    from core.simulate import simulate_replicate

    config = _scenario_config(args, config_manager)
    store = ReplicateStore(args.out)
    store.write_manifest({"config": config.model_dump(mode="json"), "variants": []})
    for r in range(config.replicates):
        sim = simulate_replicate(config, r)
        record = ReplicateRecord(
            scenario=config.scenario, n_fid=config.n_fid, n_fdd=config.n_fdd,
            replicate=r, truth=sim.truth_values(),
        )
        store.write_truth(record)
        path = write_observations(sim.observations, store.replicates_dir / f"{record.stem}_obs.csv")
        console.log(f"Simulated replicate {r}: {len(sim.observations)} observations -> {path}")


async def run_fit(args, config_manager):
    """Fit one variant to an observation file and write the report."""
    import numpy as np

    from connectors.data.covariates import CovariateSpec, build_design, load_covariate_specs, load_daily_covariates
    from connectors.data.observations import load_observations
    from connectors.data.vessels import load_vessels, vessel_design
    from core.grid import build_grid
    from core.hurdle import CatchabilityModel
    from core.inference import fit, predict_surface
    from core.likelihood import ModelData
    from core.params import Family, JointParams, ModelSpec

    settings = config_manager.get_settings()
    specs = load_covariate_specs(args.covariates) if args.covariates else []
    obs = load_observations(
        args.data, schema=specs, reference_vessel=settings.model.reference_vessel,
        enforce_vessel_rule=settings.model.enforce_vessel_source_rule,
    )
    daily = load_daily_covariates(args.daily) if args.daily else None
    design = build_design(obs, specs, daily=daily)

    catchability = CatchabilityModel(args.catchability or settings.model.catchability)
    family = Family(args.family or settings.model.family)
    spec = ModelSpec.for_variant(args.variant, family=family, catchability=catchability)

    attributes = None
    ids = sorted({int(v) for v in obs.vessels if v != settings.model.reference_vessel})
    if catchability.has_attributes:
        if args.vessels is None:
            console.log("Attribute catchability needs --vessels")
            sys.exit(1)
        vessels = load_vessels(args.vessels)
        attributes, _ = vessel_design(
            vessels, [CovariateSpec(name="length_m"), CovariateSpec(name="power_kw")], ids
        )

    g = settings.grid
    nx, ny = args.grid or (g.nx, g.ny)
    grid = build_grid(nx, ny, (g.xmin, g.xmax, g.ymin, g.ymax), g.pad_fraction)
    mesh = grid.coarsen(g.mesh_subsample)
    time_axis = obs.time_axis()
    data = ModelData(
        obs, mesh, time_axis, spec=spec, design=design, vessel_attributes=attributes,
        vessel_ids=ids, reference_vessel=settings.model.reference_vessel,
        reference_value=settings.model.reference_catchability,
    )
    init = None
    if args.init:
        # a previous fit report or a bare parameter set
        raw = json.loads(args.init.read_text())
        init = JointParams.model_validate(raw.get("params", raw))

    console.log(f"Fitting {args.variant} model to {len(obs)} observations on a {mesh.nx}x{mesh.ny} mesh")
    report = fit(
        data, mesh, time_axis, init=init, config=settings.inference,
        debug=settings.general.debug_components,
    )
    report.to_json(args.out)
    console.log(f"Converged: {report.converged} ({report.message})")
    console.log(f"AIC {report.aic:.3f}, log-likelihood {report.loglik:.3f}")
    console.log(f"Wrote {args.out}")

    if args.surface:
        if report.presence_columns or report.biomass_columns:
            console.log("Surface uses covariates held at zero on the grid")
        prediction = predict_surface(report, grid, time_axis)
        frame = prediction.to_frame()
        frame.to_csv(args.surface, index=False, float_format="%.8g")
        console.log(f"Wrote {args.surface} ({int(np.isfinite(frame['mu_se']).sum())} rows with SEs)")


async def run_replicate_command(args, config_manager):
    from core.harness import ExperimentRunner
    from core.params import Variant

    settings = config_manager.get_settings()
    config = _scenario_config(args, config_manager)
    variants = [Variant.parse(v.strip()) for v in args.variants.split(",") if v.strip()]
    runner = ExperimentRunner(
        args.out, settings.inference, settings.model,
        max_concurrent=args.workers or settings.harness.max_concurrent_replicates,
    )
    records = await runner.run(config, variants)
    console.log(f"Finished {len(records)} replicates in {args.out}")


async def run_report(args, config_manager):
    from core.harness import build_report

    settings = config_manager.get_settings()
    table = build_report(args.dir, min_successes=settings.harness.min_successes)
    for variant, counts in table.counts.items():
        console.log(f"  {variant}: {counts['successes']} successes, {counts['failures']} failures")


async def run_validate(args, config_manager):
    from connectors.data.covariates import load_covariate_specs
    from connectors.data.observations import load_observations, observation_summary

    settings = config_manager.get_settings()
    specs = load_covariate_specs(args.covariates) if args.covariates else []
    obs = load_observations(
        args.data, schema=specs, reference_vessel=settings.model.reference_vessel,
        enforce_vessel_rule=settings.model.enforce_vessel_source_rule,
    )
    summary = observation_summary(obs)
    table = Table(title=f"{args.data} ({len(obs)} observations)")
    for column in summary.columns:
        table.add_column(column)
    for row in summary.itertuples(index=False):
        table.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row))
    console.print(table)


async def show_status(args):
    """Show replicate counts; with --watch, follow replicates as they finish."""
    from core.progress import RunWatcher, status_table

    console.print(status_table(args.dir))
    if args.watch:
        await RunWatcher(args.dir).start()


def run():
    asyncio.run(main())


if __name__ == "__main__":
    run()
