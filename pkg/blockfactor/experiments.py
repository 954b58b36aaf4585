"""
Simulation studies at desk scale.

A scenario fixes the generating model (equal-sized blocks sharing alpha,
epsilon and delta) and a sample size; each replicate samples a dataset,
runs the selection procedure(s) and records how close the result is to the
truth: whether the true partition is among the HAC candidates, ARI between
partitions, KL divergence between fitted and true distributions, and time.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sklearn.metrics import adjusted_rand_score

from blockfactor.core.config import settings
from blockfactor.core.logging import get_logger
from blockfactor.distribution import (
    BinaryDataset,
    Model,
    Partition,
    VariableParams,
    block_log_pmf,
    canonicalize,
    model_cramers_v_matrix,
    pair_prob,
    sample,
)
from blockfactor.errors import ComponentTooLargeError, InvalidOptionError, PartitionMismatchError
from blockfactor.estimation import FitConfig
from blockfactor.selection import (
    MHConfig,
    cramers_v_matrix,
    reduction_candidates,
    select_hac,
    select_mh,
)
from blockfactor.utils.parallel import parallel_map

logger = get_logger(__name__)

Method = Literal["hac", "mh", "both"]


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    d: int = Field(default=10, ge=1)
    block_size: int = Field(default=5, ge=1)
    alpha: float = Field(default=0.4, gt=0, lt=1)
    epsilon: float = Field(default=0.4, ge=0, lt=1)
    delta: int = Field(default=1, ge=0, le=1)
    replicates: int = Field(default=20, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    method: Method = "hac"
    linkage: Literal["ward", "single", "complete", "average"] = "ward"
    restarts: int = Field(default=10, ge=1)
    tol: float = Field(default=0.01, gt=0)
    max_iter: int = Field(default=500, ge=1)
    mh_iters: int = Field(default=500, ge=1)
    mh_chains: int = Field(default=3, ge=1)
    threads: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _blocks_divide(self):
        if self.d % self.block_size:
            raise ValueError(f"d={self.d} is not a multiple of block_size={self.block_size}")
        return self

    def methods(self) -> list[str]:
        return ["hac", "mh"] if self.method == "both" else [self.method]


GRID_FIELDS = ("n", "d", "block_size", "alpha", "epsilon")


def expand_scenarios(spec: dict[str, Any]) -> list[ScenarioConfig]:
    """Scenario JSON -> configs; list-valued grid fields expand as a product.

    Accepts one scenario object or {"scenarios": [...]} of them.
    """
    if "scenarios" in spec:
        shared = {k: v for k, v in spec.items() if k != "scenarios"}
        out = []
        for item in spec["scenarios"]:
            out.extend(expand_scenarios({**shared, **item}))
        return out
    grid = {k: v for k, v in spec.items() if k in GRID_FIELDS and isinstance(v, list)}
    fixed = {k: v for k, v in spec.items() if k not in grid}
    keys = list(grid)
    configs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        try:
            configs.append(ScenarioConfig(**fixed, **dict(zip(keys, values))))
        except ValueError as e:
            raise InvalidOptionError(f"invalid scenario: {e}") from None
    return configs


def true_model(cfg: ScenarioConfig) -> Model:
    labels = tuple(j // cfg.block_size for j in range(cfg.d))
    params = tuple(VariableParams(cfg.alpha, cfg.epsilon, cfg.delta) for _ in range(cfg.d))
    return canonicalize(Model(Partition(labels), params))


# ===============================================================
# Distances between models and partitions
# ===============================================================

def _components(a: Partition, b: Partition) -> list[list[int]]:
    owner = list(range(a.d))

    def root(j: int) -> int:
        while owner[j] != j:
            owner[j] = owner[owner[j]]
            j = owner[j]
        return j

    for partition in (a, b):
        for block in partition.blocks():
            for j in block[1:]:
                owner[root(j)] = root(block[0])
    groups: dict[int, list[int]] = {}
    for j in range(a.d):
        groups.setdefault(root(j), []).append(j)
    return sorted(groups.values())


def _component_log_pmf(model: Model, component: list[int], outcomes: np.ndarray) -> np.ndarray:
    position = {j: p for p, j in enumerate(component)}
    total = np.zeros(outcomes.shape[0])
    for block in model.blocks():
        if block.members[0] not in position:
            continue
        cols = [position[j] for j in block.members]
        total += block_log_pmf(block, outcomes[:, cols])
    return total


def kl_divergence(true: Model, estimate: Model, cap: int | None = None) -> float:
    """Exact KL(true || estimate), enumerated per connected component of
    the union of both partitions."""
    if true.d != estimate.d:
        raise PartitionMismatchError(f"models have {true.d} and {estimate.d} variables")
    cap = settings.KL_COMPONENT_CAP if cap is None else cap
    total = 0.0
    for component in _components(true.partition, estimate.partition):
        size = len(component)
        if size > cap:
            raise ComponentTooLargeError(
                f"component of {size} variables exceeds the exact-enumeration cap of {cap}; "
                "a Monte Carlo estimate is needed for this pair of models"
            )
        outcomes = ((np.arange(2**size)[:, None] >> np.arange(size)) & 1).astype(float)
        log_p = _component_log_pmf(true, component, outcomes)
        log_q = _component_log_pmf(estimate, component, outcomes)
        p = np.exp(log_p)
        support = p > 0
        if np.any(np.isneginf(log_q[support])):
            return float("inf")
        total += float(np.sum(p[support] * (log_p[support] - log_q[support])))
    return max(total, 0.0)


def adjusted_rand_index(p1: Partition, p2: Partition) -> float:
    if p1.d != p2.d:
        raise PartitionMismatchError(f"partitions cover {p1.d} and {p2.d} variables")
    return float(adjusted_rand_score(p1.labels, p2.labels))


# ===============================================================
# Replicates and reports
# ===============================================================

@dataclass
class MethodOutcome:
    partition: Partition
    ari: float
    kl: float
    seconds: float
    exact: bool


@dataclass
class ReplicateOutcome:
    index: int
    recovered: bool
    methods: dict[str, MethodOutcome] = field(default_factory=dict)


def run_replicate(cfg: ScenarioConfig, index: int) -> ReplicateOutcome:
    data_seed, fit_seed, mh_seed = np.random.SeedSequence([cfg.seed, index]).spawn(3)
    truth = true_model(cfg)
    data = sample(truth, cfg.n, data_seed)
    fit_cfg = FitConfig(
        restarts=cfg.restarts,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        seed=int(fit_seed.generate_state(1)[0]),
        threads=1,
    )
    outcome = ReplicateOutcome(index, truth.partition in reduction_candidates(data, cfg.linkage))
    for method in cfg.methods():
        if method == "hac":
            result = select_hac(data, fit_cfg, cfg.linkage)
        else:
            mh_cfg = MHConfig(iterations=cfg.mh_iters, chains=cfg.mh_chains, seed=int(mh_seed.generate_state(1)[0]))
            result = select_mh(data, fit_cfg, mh_cfg)
        chosen = result.best.model
        try:
            kl = kl_divergence(truth, chosen)
        except ComponentTooLargeError as e:
            logger.warning(f"replicate {index} ({method}): KL skipped, {e.detail}")
            kl = float("nan")
        outcome.methods[method] = MethodOutcome(
            partition=chosen.partition,
            ari=adjusted_rand_index(truth.partition, chosen.partition),
            kl=kl,
            seconds=result.elapsed,
            exact=chosen.partition == truth.partition,
        )
    return outcome


def _sd(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    outcomes: list[ReplicateOutcome]

    def rows(self) -> list[dict[str, Any]]:
        recovered = sum(o.recovered for o in self.outcomes)
        rows = []
        for method in self.config.methods():
            stats = [o.methods[method] for o in self.outcomes]
            aris = [s.ari for s in stats]
            kls = [s.kl for s in stats if not np.isnan(s.kl)]
            rows.append(
                {
                    "n": self.config.n,
                    "d": self.config.d,
                    "block_size": self.config.block_size,
                    "alpha": self.config.alpha,
                    "epsilon": self.config.epsilon,
                    "method": method,
                    "replicates": len(self.outcomes),
                    "recovery_count": recovered,
                    "selection_count": sum(s.exact for s in stats),
                    "ari_mean": float(np.mean(aris)),
                    "ari_sd": _sd(aris),
                    "kl_mean": float(np.mean(kls)) if kls else float("nan"),
                    "kl_sd": _sd(kls),
                    "seconds_mean": float(np.mean([s.seconds for s in stats])),
                }
            )
        return rows


TIMING_COLUMNS = ("seconds_mean",)


@dataclass
class ExperimentReport:
    scenarios: list[ScenarioResult]
    wall_seconds: float = 0.0

    def to_frame(self, timings: bool = False) -> pd.DataFrame:
        frame = pd.DataFrame([row for s in self.scenarios for row in s.rows()])
        if not timings:
            frame = frame.drop(columns=[c for c in TIMING_COLUMNS if c in frame.columns])
        return frame

    def to_csv(self, timings: bool = False) -> str:
        return self.to_frame(timings).to_csv(index=False, lineterminator="\n")


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    logger.info(f"scenario n={cfg.n} d={cfg.d} epsilon={cfg.epsilon}: {cfg.replicates} replicates")
    outcomes = parallel_map(lambda i: run_replicate(cfg, i), range(cfg.replicates), cfg.threads)
    return ScenarioResult(cfg, outcomes)


def run_grid(configs: Sequence[ScenarioConfig]) -> ExperimentReport:
    started = time.perf_counter()
    results = [run_scenario(cfg) for cfg in configs]
    return ExperimentReport(results, time.perf_counter() - started)


# ===============================================================
# Real-data summaries
# ===============================================================

PAIR_COLUMNS = [
    "variable_a",
    "variable_b",
    "modelled",
    "block",
    "empirical_v",
    "model_v",
    "empirical_p_a_given_b",
    "model_p_a_given_b",
    "empirical_p_b_given_a",
    "model_p_b_given_a",
]


def application_summary(model: Model, data: BinaryDataset) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-block parameter means, and every pair of variables with modeled vs.
    empirical Cramer's V and P(X_a = 1 | X_b = 1) both ways.

    Pairs in different blocks are flagged `modelled=False`; the model treats
    them as independent.
    """
    if model.d != data.d:
        raise PartitionMismatchError(f"model has {model.d} variables, data has {data.d} columns")
    names = data.names
    labels = model.partition.labels
    blocks = []
    for b, members in enumerate(model.partition.blocks()):
        params = [model.params[j] for j in members]
        blocks.append(
            {
                "block": b,
                "size": len(members),
                "variables": " ".join(names[j] for j in members),
                "alpha_mean": float(np.mean([p.alpha for p in params])),
                "epsilon_mean": float(np.mean([p.epsilon for p in params])),
            }
        )
    empirical = cramers_v_matrix(data)
    modeled = model_cramers_v_matrix(model)
    x = data.values.astype(float)
    ones = x.sum(axis=0)
    both = x.T @ x

    def given(joint: float, margin: float) -> float:
        return joint / margin if margin > 0 else float("nan")

    pairs = []
    for j, k in itertools.combinations(range(data.d), 2):
        same = labels[j] == labels[k]
        vp_a, vp_b = model.params[j], model.params[k]
        joint = pair_prob(vp_a, vp_b, same)
        pairs.append(
            {
                "variable_a": names[j],
                "variable_b": names[k],
                "modelled": same,
                "block": labels[j] if same else None,
                "empirical_v": float(empirical[j, k]),
                "model_v": float(modeled[j, k]),
                "empirical_p_a_given_b": given(both[j, k], ones[k]),
                "model_p_a_given_b": given(joint, vp_b.alpha),
                "empirical_p_b_given_a": given(both[j, k], ones[j]),
                "model_p_b_given_a": given(joint, vp_a.alpha),
            }
        )
    frame = pd.DataFrame(pairs, columns=PAIR_COLUMNS)
    frame["block"] = frame["block"].astype("Int64")
    return pd.DataFrame(blocks), frame
