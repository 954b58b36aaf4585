import itertools

import numpy as np

from blockfactor.distribution import Model, Partition, VariableParams, canonicalize


def all_outcomes(d: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=float)


def random_params(rng: np.random.Generator, size: int) -> tuple[VariableParams, ...]:
    return tuple(
        VariableParams(float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.0, 0.95)), int(rng.integers(0, 2)))
        for _ in range(size)
    )


def block_model(d: int, block_size: int, alpha: float = 0.4, epsilon: float = 0.4, delta: int = 1) -> Model:
    """Equal blocks sharing one parameter triple, as in the simulation design."""
    labels = tuple(j // block_size for j in range(d))
    params = tuple(VariableParams(alpha, epsilon, delta) for _ in range(d))
    return canonicalize(Model(Partition(labels), params))
