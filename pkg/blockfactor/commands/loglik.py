"""
blockfactor/commands/loglik.py
Score a dataset under a model JSON.
"""

import click

from blockfactor.dependencies import load_dataset, load_model
from blockfactor.distribution import log_likelihood
from blockfactor.storage import write_output


@click.command("loglik")
@click.argument("model_json", metavar="MODEL.JSON")
@click.argument("data_csv", metavar="DATA.CSV")
@click.option("--output", "-o", default=None)
def command(model_json, data_csv, output):
    """Print the log-likelihood (natural log, summed over rows)."""
    data = load_dataset(data_csv)
    model = load_model(model_json, data)
    write_output(f"{log_likelihood(model, data)!r}\n", output)
