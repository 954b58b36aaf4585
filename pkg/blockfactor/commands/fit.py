"""
blockfactor/commands/fit.py
Fit a fixed partition: CSV + partition -> model JSON with EM diagnostics.
"""

import click

from blockfactor.core.logging import get_logger
from blockfactor.dependencies import CliState, fit_config, load_dataset, pass_state
from blockfactor.estimation import fit
from blockfactor.storage import dump_json, model_to_document, parse_partition, write_output

logger = get_logger(__name__)


@click.command("fit")
@click.argument("data_csv", metavar="DATA.CSV")
@click.option(
    "--partition",
    "partition_spec",
    required=True,
    help='Blocks as JSON name groups (\'[["A","B"],["C"]]\') or a label vector (\'0,0,1\').',
)
@click.option("--restarts", type=int, default=40, show_default=True, help="Random EM initializations per block.")
@click.option("--tol", type=float, default=0.01, show_default=True, help="EM stops when the log-likelihood gains less.")
@click.option("--max-iter", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=None, help="Defaults to the documented constant 20160729.")
@click.option("--output", "-o", default=None, help="Model JSON path (stdout if omitted).")
@pass_state
def command(state: CliState, data_csv, partition_spec, restarts, tol, max_iter, seed, output):
    """Estimate the model for a given block structure."""
    data = load_dataset(data_csv)
    partition = parse_partition(partition_spec, data.names)
    cfg = fit_config(state, restarts, tol, max_iter, seed)

    fitted = fit(data, partition, cfg)
    logger.info(f"fitted {partition.n_blocks} blocks: loglik {fitted.loglik:.6f}, BIC {fitted.bic:.6f}")
    write_output(dump_json(model_to_document(fitted.model, fitted, cfg.seed)), output)
