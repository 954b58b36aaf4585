"""
blockfactor/commands/select.py
Choose the block structure by BIC, deterministically (HAC) or by
Metropolis-Hastings, and write the selection JSON plus the candidate table.
"""

import click

from blockfactor.core.logging import get_logger
from blockfactor.dependencies import CliState, fit_config, load_dataset, pass_state
from blockfactor.selection import LINKAGES, MHConfig, select_hac, select_mh
from blockfactor.storage import candidates_to_csv, dump_json, selection_to_document, write_output

logger = get_logger(__name__)


@click.command("select")
@click.argument("data_csv", metavar="DATA.CSV")
@click.option("--method", type=click.Choice(["hac", "mh"]), default="hac", show_default=True)
@click.option("--linkage", type=click.Choice(LINKAGES), default="ward", show_default=True)
@click.option("--mh-iters", type=int, default=1000, show_default=True, help="Iterations per MH chain.")
@click.option("--mh-chains", type=int, default=3, show_default=True)
@click.option("--no-memo", is_flag=True, help="Refit every visited partition instead of caching.")
@click.option("--restarts", type=int, default=40, show_default=True)
@click.option("--tol", type=float, default=0.01, show_default=True)
@click.option("--max-iter", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--output", "-o", default=None, help="Selection JSON path (stdout if omitted).")
@click.option("--candidates-csv", default=None, help="Also write the candidate BIC table as CSV.")
@pass_state
def command(state: CliState, data_csv, method, linkage, mh_iters, mh_chains, no_memo, restarts, tol, max_iter, seed, output, candidates_csv):
    """Select the partition with the highest BIC."""
    cfg = fit_config(state, restarts, tol, max_iter, seed)
    mh_cfg = None
    if method == "mh":
        mh_cfg = MHConfig(iterations=mh_iters, chains=mh_chains, seed=cfg.seed, memoize=not no_memo)
    data = load_dataset(data_csv)

    if method == "hac":
        result = select_hac(data, cfg, linkage)
    else:
        result = select_mh(data, cfg, mh_cfg)
    logger.info(f"{method}: {len(result.candidates)} candidates scored in {result.elapsed:.2f}s")

    write_output(dump_json(selection_to_document(result, data.names, cfg.seed)), output)
    if candidates_csv:
        write_output(candidates_to_csv(result, data.names), candidates_csv)
