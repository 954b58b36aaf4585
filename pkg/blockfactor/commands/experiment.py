"""
blockfactor/commands/experiment.py
Run a scenario grid and write the report CSV plus a JSON sidecar with
seed, library versions and wall time.
"""

import click

from blockfactor.core.logging import get_logger
from blockfactor.dependencies import CliState, load_json, package_versions, pass_state, resolve_seed
from blockfactor.errors import DataFormatError
from blockfactor.experiments import expand_scenarios, run_grid
from blockfactor.models import ExperimentMetadata
from blockfactor.storage import dump_json, write_output

logger = get_logger(__name__)


@click.command("experiment")
@click.argument("scenario_json", metavar="SCENARIO.JSON")
@click.option("--output", "-o", default=None, help="Report CSV path (stdout if omitted).")
@click.option("--metadata", default=None, help="Sidecar JSON path (default: <output>.json when --output is set).")
@click.option("--timings", is_flag=True, help="Add per-method mean seconds to the report (not reproducible).")
@pass_state
def command(state: CliState, scenario_json, output, metadata, timings):
    """Simulation study over the scenarios in SCENARIO.JSON."""
    spec = load_json(scenario_json)
    if not isinstance(spec, dict):
        raise DataFormatError(f"{scenario_json}: expected a JSON object")
    configs = expand_scenarios(spec)
    if state.threads is not None:
        configs = [cfg if "threads" in cfg.model_fields_set else cfg.model_copy(update={"threads": state.threads}) for cfg in configs]
    logger.info(f"{len(configs)} scenario(s) from {scenario_json}")

    report = run_grid(configs)
    frame = report.to_frame(timings)
    write_output(report.to_csv(timings), output)

    sidecar = metadata or (f"{output}.json" if output and output != "-" else None)
    if sidecar:
        doc = ExperimentMetadata(
            seed=resolve_seed(spec.get("seed")),
            versions=package_versions(),
            wall_seconds=report.wall_seconds,
            scenarios=[cfg.model_dump() for cfg in configs],
            rows=len(frame),
        )
        write_output(dump_json(doc), sidecar)
