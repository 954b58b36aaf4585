"""
blockfactor/commands/cramer.py
Cramer's V matrix, empirical (from a CSV) or implied by a model JSON.
The first line of the output says which.
"""

import click

from blockfactor.dependencies import load_dataset, load_model
from blockfactor.distribution import model_cramers_v_matrix
from blockfactor.errors import InvalidOptionError
from blockfactor.selection import cramers_v_matrix
from blockfactor.storage import matrix_to_csv, write_output


@click.command("cramer")
@click.argument("data_csv", metavar="[DATA.CSV]", required=False)
@click.option("--model", "model_json", default=None, help="Model JSON; gives the model-implied matrix.")
@click.option("--output", "-o", default=None)
def command(data_csv, model_json, output):
    """Pairwise Cramer's V for all variables."""
    if (data_csv is None) == (model_json is None):
        raise InvalidOptionError("give exactly one of DATA.CSV or --model")

    if model_json is not None:
        model = load_model(model_json)
        text = matrix_to_csv(model_cramers_v_matrix(model), model.variable_names(), comment="cramer_v: model")
    else:
        data = load_dataset(data_csv)
        text = matrix_to_csv(cramers_v_matrix(data), data.names, comment="cramer_v: empirical")
    write_output(text, output)
