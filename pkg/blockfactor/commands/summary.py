"""
blockfactor/commands/summary.py
Real-data summary of a fitted model: per-block parameter means and, for
every pair of variables, the empirical against the modeled Cramer's V and
conditional probabilities, flagged by whether the model links the pair.
"""

import click

from blockfactor.dependencies import load_dataset, load_model
from blockfactor.experiments import application_summary
from blockfactor.storage import write_output


@click.command("summary")
@click.argument("model_json", metavar="MODEL.JSON")
@click.argument("data_csv", metavar="DATA.CSV")
@click.option("--output", "-o", default=None, help="Block table CSV (stdout if omitted).")
@click.option("--pairs", "pairs_csv", default=None, help="Write the all-pairs table here.")
def command(model_json, data_csv, output, pairs_csv):
    """Block and pair tables for a model fitted to DATA.CSV."""
    data = load_dataset(data_csv)
    model = load_model(model_json, data)
    blocks, pairs = application_summary(model, data)
    write_output(blocks.to_csv(index=False, lineterminator="\n"), output)
    if pairs_csv:
        write_output(pairs.to_csv(index=False, lineterminator="\n"), pairs_csv)
