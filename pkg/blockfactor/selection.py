"""
Choosing the block structure.

Two searches share one scoring rule (BIC of the IFM fit):
  - HAC: cluster the variables on 1 - empirical Cramer's V, then score the d
    nested partitions of the dendrogram.
  - MH: random walk over partitions whose stationary law is proportional to
    exp(BIC); the best visited partition wins.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats.contingency import association

from blockfactor.core.config import settings
from blockfactor.core.logging import get_logger, warn
from blockfactor.distribution import BinaryDataset, Partition
from blockfactor.estimation import (
    BlockFitCache,
    FitConfig,
    FittedModel,
    MarginResult,
    fit,
    margin_step,
)
from blockfactor.utils.parallel import parallel_map

logger = get_logger(__name__)

Linkage = Literal["ward", "single", "complete", "average"]
LINKAGES: tuple[str, ...] = ("ward", "single", "complete", "average")


# ===============================================================
# Empirical Cramer's V
# ===============================================================

def empirical_cramers_v(data: BinaryDataset, j: int, k: int, sink: list[str] | None = None) -> float:
    if j == k:
        raise ValueError("Cramer's V needs two distinct columns")
    x, y = data.column(j).astype(np.int64), data.column(k).astype(np.int64)
    for col, values in ((j, x), (k, y)):
        if values.min() == values.max():
            warn(logger, sink, f"column {data.names[col]!r} is constant; Cramer's V set to 0")
            return 0.0
    table = np.bincount(2 * x + y, minlength=4).reshape(2, 2)
    return float(association(table, method="cramer"))


def cramers_v_matrix(data: BinaryDataset, sink: list[str] | None = None) -> np.ndarray:
    """All pairwise Cramer's V at once (2x2 case: |cov| / sqrt(var var))."""
    x = data.values.astype(float)
    p = x.mean(axis=0)
    joint = x.T @ x / data.n
    cov = joint - np.outer(p, p)
    var = p * (1.0 - p)
    constant = var <= 0.0
    for j in np.flatnonzero(constant):
        warn(logger, sink, f"column {data.names[j]!r} is constant; Cramer's V set to 0")
    scale = np.sqrt(np.outer(var, var))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(scale > 0, np.abs(cov) / scale, 0.0)
    v = np.clip(v, 0.0, 1.0)
    np.fill_diagonal(v, 1.0)
    return v


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    values: np.ndarray

    def __post_init__(self):
        m = np.array(self.values, dtype=float, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"dissimilarity must be square, got shape {m.shape}")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ValueError("dissimilarity must be symmetric")
        if m.size and (m.min() < -1e-12 or m.max() > 1.0 + 1e-12):
            raise ValueError("dissimilarity entries must lie in [0, 1]")
        m = np.clip((m + m.T) / 2.0, 0.0, 1.0)
        np.fill_diagonal(m, 0.0)
        m.setflags(write=False)
        object.__setattr__(self, "values", m)

    @property
    def d(self) -> int:
        return self.values.shape[0]


def dissimilarity_matrix(data: BinaryDataset, sink: list[str] | None = None) -> DissimilarityMatrix:
    return DissimilarityMatrix(1.0 - cramers_v_matrix(data, sink))


# ===============================================================
# Agglomerative clustering
# ===============================================================

@dataclass(frozen=True)
class Merge:
    # scipy numbering: leaves 0..d-1, the cluster made at step s is d + s
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    d: int
    merges: tuple[Merge, ...]
    linkage: str = "ward"

    def partition(self, k: int) -> Partition:
        """The k-block level of the hierarchy."""
        if not 1 <= k <= self.d:
            raise ValueError(f"k must lie in 1..{self.d}")
        owner = list(range(2 * self.d - 1))

        def root(c: int) -> int:
            while owner[c] != c:
                owner[c] = owner[owner[c]]
                c = owner[c]
            return c

        for step, merge in enumerate(self.merges[: self.d - k]):
            new = self.d + step
            owner[root(merge.left)] = new
            owner[root(merge.right)] = new
        return Partition(tuple(root(j) for j in range(self.d)))

    def partitions(self) -> list[Partition]:
        """Levels k = d, d-1, ..., 1."""
        return [self.partition(k) for k in range(self.d, 0, -1)]

    def heights(self) -> list[float]:
        return [m.height for m in self.merges]

    def to_linkage(self) -> np.ndarray:
        """scipy.cluster.hierarchy linkage matrix."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float).reshape(-1, 4)


def _lance_williams(linkage: str, d_ik, d_jk, d_ij, n_i, n_j, n_k):
    if linkage == "single":
        return np.minimum(d_ik, d_jk)
    if linkage == "complete":
        return np.maximum(d_ik, d_jk)
    if linkage == "average":
        return (n_i * d_ik + n_j * d_jk) / (n_i + n_j)
    # ward, with entries read as squared distances
    total = n_i + n_j + n_k
    return ((n_i + n_k) * d_ik + (n_j + n_k) * d_jk - n_k * d_ij) / total


def hac(M: DissimilarityMatrix | np.ndarray, linkage: str = "ward") -> Dendrogram:
    """Agglomerative clustering with Lance-Williams updates.

    Ties go to the lexicographically smallest pair, where each cluster is
    identified by its smallest variable index.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; choose from {', '.join(LINKAGES)}")
    if not isinstance(M, DissimilarityMatrix):
        M = DissimilarityMatrix(M)
    d = M.d
    dist = np.array(M.values, dtype=float)
    active = np.ones(d, dtype=bool)
    sizes = np.ones(d)
    cluster_id = list(range(d))
    merges: list[Merge] = []

    upper = np.triu(np.ones((d, d), dtype=bool), k=1)
    for step in range(d - 1):
        mask = upper & active[:, None] & active[None, :]
        flat = np.where(mask, dist, np.inf)
        i, j = divmod(int(np.argmin(flat)), d)
        height = float(dist[i, j])

        others = active.copy()
        others[[i, j]] = False
        k = np.flatnonzero(others)
        updated = _lance_williams(linkage, dist[i, k], dist[j, k], height, sizes[i], sizes[j], sizes[k])
        dist[i, k] = dist[k, i] = updated

        left, right = sorted((cluster_id[i], cluster_id[j]))
        sizes[i] += sizes[j]
        merges.append(Merge(left, right, height, int(sizes[i])))
        cluster_id[i] = d + step
        active[j] = False
    return Dendrogram(d, tuple(merges), linkage)


# ===============================================================
# Results
# ===============================================================

@dataclass(frozen=True)
class Candidate:
    partition: Partition
    bic: float
    loglik: float
    n_params: int

    @property
    def n_blocks(self) -> int:
        return self.partition.n_blocks

    def rank_key(self):
        # best first: higher BIC, then fewer parameters, fewer blocks, labels
        return (-self.bic, self.n_params, self.n_blocks, self.partition.labels)


@dataclass
class SelectionResult:
    best: FittedModel
    candidates: list[Candidate]
    method: str
    diagnostics: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    # wall time; kept out of diagnostics so documents stay reproducible
    elapsed: float = 0.0


def _candidate(fitted: FittedModel) -> Candidate:
    return Candidate(fitted.partition, fitted.bic, fitted.loglik, fitted.n_params)


def best_candidate(candidates: Sequence[Candidate]) -> Candidate:
    return min(candidates, key=Candidate.rank_key)


def _inner_config(cfg: FitConfig) -> FitConfig:
    return cfg.model_copy(update={"threads": 1})


# ===============================================================
# Deterministic search
# ===============================================================

def reduction_candidates(data: BinaryDataset, linkage: str = "ward") -> list[Partition]:
    """The d nested partitions proposed by the HAC reduction step."""
    return hac(dissimilarity_matrix(data), linkage).partitions()


def select_hac(
    data: BinaryDataset,
    cfg: FitConfig | None = None,
    linkage: str = "ward",
    cache: BlockFitCache | None = None,
) -> SelectionResult:
    cfg = cfg or FitConfig()
    started = time.perf_counter()
    sink: list[str] = []
    margins = margin_step(data)
    dendrogram = hac(dissimilarity_matrix(data, sink), linkage)
    partitions = dendrogram.partitions()
    cache = cache if cache is not None else BlockFitCache()
    inner = _inner_config(cfg)

    fits = parallel_map(lambda p: fit(data, p, inner, cache, margins), partitions, cfg.threads)
    by_partition = {f.partition: f for f in fits}
    candidates = [_candidate(f) for f in fits]
    winner = best_candidate(candidates)
    best = by_partition[winner.partition]
    logger.info(f"HAC ({linkage}) selected {winner.n_blocks} blocks, BIC {winner.bic:.4f}")
    return SelectionResult(
        best=best,
        candidates=candidates,
        method="hac",
        diagnostics={
            "linkage": linkage,
            "merge_heights": dendrogram.heights(),
            "block_fits": cache.misses if cache.enabled else None,
        },
        warnings=sink + list(best.warnings),
        elapsed=time.perf_counter() - started,
    )


# ===============================================================
# Metropolis-Hastings search
# ===============================================================

class MHConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(default=1000, ge=1)
    chains: int = Field(default=3, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    memoize: bool = True


@dataclass
class ChainTrace:
    initial: Partition
    states: list[Partition]
    accepted: int
    proposals: int
    evaluations: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def random_partition(d: int, rng: np.random.Generator) -> Partition:
    return Partition(tuple(int(v) for v in rng.integers(0, d, size=d)))


def run_mh_chain(
    score: Callable[[Partition], float],
    d: int,
    iterations: int,
    rng: np.random.Generator,
    initial: Partition | None = None,
) -> ChainTrace:
    """One chain; `states` holds the state after every iteration.

    Proposal: pick a variable uniformly, then a label uniformly among the
    B current blocks plus one new block, so q = 1 / (d (B + 1)).
    """
    initial = initial if initial is not None else random_partition(d, rng)
    current = initial
    current_score = score(current)
    evaluations = 1
    states: list[Partition] = []
    accepted = 0
    for _ in range(iterations):
        j = int(rng.integers(d))
        label = int(rng.integers(current.n_blocks + 1))
        proposal = current.move(j, label)
        u = rng.random()
        if proposal == current:
            accepted += 1
        else:
            proposal_score = score(proposal)
            evaluations += 1
            log_rho = (
                proposal_score
                - current_score
                + math.log(current.n_blocks + 1)
                - math.log(proposal.n_blocks + 1)
            )
            if log_rho >= 0.0 or u < math.exp(log_rho):
                current, current_score = proposal, proposal_score
                accepted += 1
        states.append(current)
    return ChainTrace(initial, states, accepted, iterations, evaluations)


def select_mh(
    data: BinaryDataset,
    cfg: FitConfig | None = None,
    mh_cfg: MHConfig | None = None,
) -> SelectionResult:
    cfg = cfg or FitConfig()
    mh_cfg = mh_cfg or MHConfig()
    started = time.perf_counter()
    margins: MarginResult = margin_step(data)
    cache = BlockFitCache(enabled=mh_cfg.memoize)
    inner = _inner_config(cfg)
    memo: dict[Partition, FittedModel] = {}
    lock = threading.Lock()

    def evaluate(partition: Partition) -> FittedModel:
        if mh_cfg.memoize:
            with lock:
                hit = memo.get(partition)
            if hit is not None:
                return hit
        fitted = fit(data, partition, inner, cache, margins)
        with lock:
            memo.setdefault(partition, fitted)
        return fitted

    def chain(index: int) -> ChainTrace:
        rng = np.random.default_rng(np.random.SeedSequence([mh_cfg.seed, index]))
        return run_mh_chain(lambda p: evaluate(p).bic, data.d, mh_cfg.iterations, rng)

    traces = parallel_map(chain, range(mh_cfg.chains), cfg.threads)

    seen: dict[Partition, None] = {}
    for trace in traces:
        for state in [trace.initial, *trace.states]:
            seen.setdefault(state, None)
    candidates = [_candidate(evaluate(p)) for p in seen]
    winner = best_candidate(candidates)
    best = evaluate(winner.partition)
    rates = [t.acceptance_rate for t in traces]
    logger.info(f"MH selected {winner.n_blocks} blocks, BIC {winner.bic:.4f}, acceptance {np.mean(rates):.3f}")
    return SelectionResult(
        best=best,
        candidates=sorted(candidates, key=Candidate.rank_key),
        method="mh",
        diagnostics={
            "iterations": mh_cfg.iterations,
            "chains": mh_cfg.chains,
            "acceptance_rates": rates,
            "acceptance_rate": float(sum(t.accepted for t in traces) / sum(t.proposals for t in traces)),
            "distinct_visited": len(seen),
            # fits actually run; without memoization every score call refits
            "bic_evaluations": len(memo) if mh_cfg.memoize else sum(t.evaluations for t in traces),
        },
        warnings=list(best.warnings),
        elapsed=time.perf_counter() - started,
    )
