"""
blockfactor/commands/sample.py
Draw a binary CSV from a model JSON.
"""

import click

from blockfactor.dependencies import load_model, resolve_seed
from blockfactor.distribution import sample
from blockfactor.storage import dataset_to_csv, write_output


@click.command("sample")
@click.argument("model_json", metavar="MODEL.JSON")
@click.option("--n", "n_rows", type=int, required=True, help="Number of rows to draw.")
@click.option("--seed", type=int, default=None)
@click.option("--output", "-o", default=None, help="CSV path (stdout if omitted).")
def command(model_json, n_rows, seed, output):
    """Sample n independent rows."""
    model = load_model(model_json)
    data = sample(model, n_rows, resolve_seed(seed))
    write_output(dataset_to_csv(data), output)
