import numpy as np
import pytest
from click.testing import CliRunner

from blockfactor.distribution import BinaryDataset, Model, Partition, VariableParams, canonicalize, sample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_block_model() -> Model:
    """Blocks {A, B, C} (one negatively oriented member) and {D, E}."""
    params = (
        VariableParams(0.3, 0.7, 1),
        VariableParams(0.5, 0.6, 1),
        VariableParams(0.6, 0.5, 0),
        VariableParams(0.4, 0.8, 1),
        VariableParams(0.45, 0.8, 1),
    )
    return canonicalize(Model(Partition((0, 0, 0, 1, 1)), params, ("A", "B", "C", "D", "E")))


@pytest.fixture
def two_block_data(two_block_model) -> BinaryDataset:
    return sample(two_block_model, 4000, 7)


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("A,B,C,D\n1,1,0,1\n0,0,1,1\n1,1,1,0\n0,1,0,0\n1,1,0,1\n0,0,1,0\n", encoding="utf-8")
    return path


@pytest.fixture
def runner():
    # keep stdout clean of warnings across click versions
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:
        return CliRunner()
