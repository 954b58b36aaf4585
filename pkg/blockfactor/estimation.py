"""
IFM estimation for a fixed partition.

Margins first (column means), then the dependency parameters of each block
with the margins held fixed: closed form for pairs, EM for larger blocks.
The E step uses the exact posterior of the block's latent uniform. Given a
row, that posterior is piecewise constant on the beta segments of the block.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from blockfactor.core.config import settings
from blockfactor.core.logging import get_logger, warn
from blockfactor.distribution import (
    EPSILON_MAX,
    PROB_FLOOR,
    BinaryDataset,
    BlockSpec,
    Model,
    Partition,
    VariableParams,
    block_log_pmf,
    canonical_block_params,
    segment_log_weights,
)
from blockfactor.errors import PartitionMismatchError
from blockfactor.utils.parallel import parallel_map

logger = get_logger(__name__)


class FitConfig(BaseModel):
    """EM settings. Defaults follow the reference real-data run."""

    model_config = ConfigDict(frozen=True)

    restarts: int = Field(default=40, ge=1)
    tol: float = Field(default=0.01, gt=0)
    max_iter: int = Field(default=500, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    threads: int | None = Field(default=None, ge=0)


@dataclass
class MarginResult:
    alpha: np.ndarray
    warnings: list[str] = field(default_factory=list)


@dataclass
class PosteriorWeights:
    """t[i, p] = P(U < beta_p | row i), columns in block member order."""

    t: np.ndarray
    warnings: list[str] = field(default_factory=list)


@dataclass
class PairFit:
    params: tuple[VariableParams, VariableParams]
    warnings: list[str] = field(default_factory=list)

    @property
    def deltas(self) -> tuple[int, int]:
        return self.params[0].delta, self.params[1].delta

    @property
    def epsilon(self) -> float:
        return self.params[0].epsilon


@dataclass
class BlockFit:
    members: tuple[int, ...]
    params: tuple[VariableParams, ...]
    loglik: float
    n_iter: int = 0
    best_restart: int | None = None
    restart_logliks: list[float] = field(default_factory=list)
    loglik_trace: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass
class FittedModel:
    model: Model
    loglik: float
    bic: float
    n: int
    n_params: int
    block_fits: list[BlockFit] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def partition(self) -> Partition:
        return self.model.partition

    def em_trace(self) -> list[dict]:
        return [
            {
                "members": list(fit.members),
                "n_iter": fit.n_iter,
                "best_restart": fit.best_restart,
                "restart_logliks": list(fit.restart_logliks),
            }
            for fit in self.block_fits
            if fit.best_restart is not None
        ]


# ===============================================================
# Margin step
# ===============================================================

def margin_step(data: BinaryDataset) -> MarginResult:
    """Column means clamped into [1/(2n), 1 - 1/(2n)]."""
    if data.n < 1:
        raise PartitionMismatchError("margin step needs at least one row")
    means = data.values.mean(axis=0, dtype=float)
    low = 1.0 / (2.0 * data.n)
    alpha = np.clip(means, low, 1.0 - low)
    result = MarginResult(alpha)
    for j in np.flatnonzero(alpha != means):
        warn(logger, result.warnings, f"column {data.names[j]!r} is constant; alpha clamped to {alpha[j]:.6g}")
    return result


# ===============================================================
# Pairs
# ===============================================================

def fit_pair(data: BinaryDataset, j1: int, j2: int, alpha_hat: Sequence[float]) -> PairFit:
    if j1 == j2:
        raise ValueError("fit_pair needs two distinct columns")
    a1, a2 = float(alpha_hat[j1]), float(alpha_hat[j2])
    n11 = float(np.mean(data.column(j1).astype(float) * data.column(j2)))
    covariance = n11 - a1 * a2
    delta = 1 if covariance >= 0 else 0
    first, second = VariableParams(a1, 0.0, 1), VariableParams(a2, 0.0, delta)
    low, high = sorted((first.beta, second.beta))

    result_warnings: list[str] = []
    epsilon = math.sqrt(abs(covariance) / (low * (1.0 - high)))
    if epsilon > EPSILON_MAX:
        warn(logger, result_warnings, f"pair ({data.names[j1]!r}, {data.names[j2]!r}): epsilon {epsilon:.6g} truncated below 1")
        epsilon = EPSILON_MAX

    ordered = sorted([(j1, first), (j2, second)], key=lambda item: data.names[item[0]])
    members = tuple(j for j, _ in ordered)
    keys = [data.names[j] for j in members]
    params = canonical_block_params(members, [vp.replace(epsilon=epsilon) for _, vp in ordered], keys)
    by_index = dict(zip(members, params))
    return PairFit((by_index[j1], by_index[j2]), result_warnings)


# ===============================================================
# E step
# ===============================================================

def latent_cdf(block: BlockSpec, rows, cuts) -> tuple[np.ndarray, np.ndarray]:
    """P(U < c | row) for every row and cut c, plus a mask of zero-pmf rows."""
    log_w = segment_log_weights(block, rows)
    total = logsumexp(log_w, axis=1)
    bad = ~np.isfinite(total)
    post = np.zeros_like(log_w)
    good = ~bad
    post[good] = np.exp(log_w[good] - total[good, None])

    betas, _, _ = block.sorted_arrays()
    edges = np.concatenate([[0.0], betas, [1.0]])
    start, width = edges[:-1, None], np.diff(edges)[:, None]
    cuts = np.asarray(cuts, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(width > 0, np.clip((cuts - start) / width, 0.0, 1.0), 0.0)
    return np.clip(post @ share, 0.0, 1.0), bad


def e_step(block: BlockSpec, rows) -> PosteriorWeights:
    betas = np.array([p.beta for p in block.params])
    t, bad = latent_cdf(block, rows, betas)
    result = PosteriorWeights(t)
    if bad.any():
        t[bad] = betas
        warn(logger, result.warnings, f"{int(bad.sum())} rows have zero probability; posterior set to prior")
    return result


# ===============================================================
# M step
# ===============================================================

def _quadratic(n11: float, n10: float, n01: float, n00: float, alpha: float | None):
    a = n11 + n10 if alpha is None else alpha
    total = n11 + n10 + n01 + n00
    off = n10 + n01
    A = -a * (1.0 - a) * total
    B = n11 * (1.0 - a) * (2.0 * a - 1.0) - off * (a * a + (1.0 - a) ** 2) + n00 * a * (1.0 - 2.0 * a)
    C = n11 * (1.0 - a) ** 2 - off * a * (1.0 - a) + n00 * a * a
    return A, B, C


def m_step_roots(n11: float, n10: float, n01: float, n00: float, alpha: float | None = None) -> tuple[float, float]:
    """Both roots (smaller, larger) of the stationarity equation.

    With alpha = n11 + n10 and counts summing to one the coefficients are
    A = -a(1-a), B = n11 a + n00 (1-a) - a^2 - (1-a)^2, C = n11 (1-a) + n00 a + A.
    """
    A, B, C = _quadratic(n11, n10, n01, n00, alpha)
    if A == 0.0:
        raise ValueError("degenerate M step: alpha must lie strictly inside (0, 1)")
    disc = max(B * B - 4.0 * A * C, 0.0)
    q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    if q == 0.0:
        return 0.0, 0.0
    roots = sorted((q / A, C / q))
    return roots[0], roots[1]


def m_step_epsilon(
    n11: float,
    n10: float,
    n01: float,
    n00: float,
    alpha: float | None = None,
    sink: list[str] | None = None,
) -> float:
    """Maximizer over [0, 1) of the expected complete-data log-likelihood.

    n11 / n10: x = 1 in the "+epsilon" / base regime; n01 / n00 likewise for x = 0.
    The objective is concave, so the answer is max(0, larger root).
    """
    A, B, C = _quadratic(n11, n10, n01, n00, alpha)
    disc = B * B - 4.0 * A * C
    if disc < -1e-12:
        warn(logger, sink, f"negative discriminant {disc:.3g} in M step; epsilon set to 0")
        return 0.0
    _, high = m_step_roots(n11, n10, n01, n00, alpha)
    return min(max(0.0, high), EPSILON_MAX)


def expected_complete_loglik(n11: float, n10: float, n01: float, n00: float, epsilon: float, alpha: float) -> float:
    def log(v):
        return math.log(min(max(v, PROB_FLOOR), 1.0 - PROB_FLOOR))

    raised = alpha + epsilon * (1.0 - alpha)
    base = (1.0 - epsilon) * alpha
    return n11 * log(raised) + n01 * log(1.0 - raised) + n10 * log(base) + n00 * log(1.0 - base)


# ===============================================================
# EM for one block
# ===============================================================

def _regime_counts(x: np.ndarray, w: np.ndarray, raised: np.ndarray) -> tuple[float, float, float, float]:
    """Weighted counts given P(row is in the "+epsilon" regime)."""
    return (
        float(np.sum(w * x * raised)),
        float(np.sum(w * x * (1.0 - raised))),
        float(np.sum(w * (1.0 - x) * raised)),
        float(np.sum(w * (1.0 - x) * (1.0 - raised))),
    )


def _block_loglik(block: BlockSpec, rows: np.ndarray, counts: np.ndarray) -> float:
    return float(np.dot(counts, block_log_pmf(block, rows)))


def _name_entropy(name: str) -> int:
    return int.from_bytes(name.encode("utf-8"), "little")


def _em_iteration(members, rows, counts, alpha, params, sink) -> list[VariableParams]:
    block = BlockSpec(members, tuple(params))
    size = len(members)
    cdf, bad = latent_cdf(block, rows, np.concatenate([alpha, 1.0 - alpha]))
    if bad.any():
        warn(logger, sink, f"{int(bad.sum())} patterns have zero probability; posterior set to prior")
        cdf[bad] = np.concatenate([alpha, 1.0 - alpha])
    weights = counts / counts.sum()
    updated = []
    for p in range(size):
        x = rows[:, p].astype(float)
        below_alpha, below_complement = cdf[:, p], cdf[:, size + p]
        # delta=1: "+epsilon" regime is U < alpha; delta=0: it is U >= 1 - alpha
        options = []
        for delta, raised in ((1, below_alpha), (0, 1.0 - below_complement)):
            if p == 0 and delta == 0:
                continue
            n = _regime_counts(x, weights, raised)
            eps = m_step_epsilon(*n, alpha=alpha[p], sink=sink)
            options.append((expected_complete_loglik(*n, eps, alpha[p]), delta, eps))
        best = max(options, key=lambda o: (o[0], o[1] == params[p].delta))
        updated.append(VariableParams(alpha[p], best[2], best[1]))
    return updated


def em_fit_block(
    members: Sequence[int],
    data: BinaryDataset,
    alpha_hat: Sequence[float],
    cfg: FitConfig,
) -> BlockFit:
    """Best of cfg.restarts random EM runs for one block (d_b >= 2)."""
    members = tuple(int(j) for j in members)
    if len(members) < 2:
        raise ValueError("EM needs a block of at least two variables")
    # EM runs in column-name order: seeds and the delta anchor follow the
    # variables, so permuting the columns permutes the estimates
    order = tuple(sorted(members, key=lambda j: data.names[j]))
    keys = [data.names[j] for j in order]
    rows, counts = data.patterns(order)
    alpha = np.array([alpha_hat[j] for j in order], dtype=float)
    seeds = np.random.SeedSequence([cfg.seed, *map(_name_entropy, keys)]).spawn(cfg.restarts)

    fit_warnings: list[str] = []
    runs: list[tuple[float, int, list[VariableParams], list[float]]] = []
    for restart, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        deltas = rng.integers(0, 2, size=len(order))
        deltas[0] = 1
        epsilons = rng.uniform(0.05, 0.95, size=len(order))
        params = [VariableParams(a, e, d) for a, e, d in zip(alpha, epsilons, deltas)]

        trace = [_block_loglik(BlockSpec(order, tuple(params)), rows, counts)]
        aborted = False
        for _ in range(cfg.max_iter):
            params = _em_iteration(order, rows, counts, alpha, params, fit_warnings)
            current = _block_loglik(BlockSpec(order, tuple(params)), rows, counts)
            if not math.isfinite(current):
                warn(logger, fit_warnings, f"block {list(members)} restart {restart}: non-finite log-likelihood, restart dropped")
                aborted = True
                break
            trace.append(current)
            if current - trace[-2] < cfg.tol:
                break
        if not aborted:
            runs.append((trace[-1], restart, params, trace))

    if not runs:
        params = [VariableParams(a, 0.0, 1) for a in alpha]
        loglik = _block_loglik(BlockSpec(order, tuple(params)), rows, counts)
        return BlockFit(members, tuple(params), loglik, warnings=fit_warnings)

    best = max(runs, key=lambda run: (run[0], -run[1]))
    loglik, restart, params, trace = best
    params = canonical_block_params(order, params, keys)
    by_member = dict(zip(order, params))
    params = [by_member[j] for j in members]
    logger.debug(f"block {list(members)}: restart {restart} best, loglik {loglik:.6f} after {len(trace) - 1} iterations")
    return BlockFit(
        members=members,
        params=tuple(params),
        loglik=loglik,
        n_iter=len(trace) - 1,
        best_restart=restart,
        restart_logliks=[run[0] for run in sorted(runs, key=lambda run: run[1])],
        loglik_trace=trace,
        warnings=fit_warnings,
    )


# ===============================================================
# Whole partition
# ===============================================================

class BlockFitCache:
    """Per-block fits keyed by membership; safe to share between threads."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._store: dict[Hashable, BlockFit] = {}
        self._lock = threading.Lock()
        self.misses = 0

    def get_or_compute(self, key: Hashable, compute: Callable[[], BlockFit]) -> BlockFit:
        if not self.enabled:
            return compute()
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        value = compute()
        with self._lock:
            if key not in self._store:
                self.misses += 1
                self._store[key] = value
            return self._store[key]

    def __len__(self) -> int:
        return len(self._store)


def count_params(partition: Partition) -> int:
    def per_block(size: int) -> int:
        if size == 1:
            return 1
        if size == 2:
            return 3
        return 2 * size

    return sum(per_block(size) for size in partition.block_sizes())


def bic_value(loglik: float, n_params: int, n: int) -> float:
    return loglik - 0.5 * n_params * math.log(n)


def fit_block(members: Sequence[int], data: BinaryDataset, alpha_hat: Sequence[float], cfg: FitConfig) -> BlockFit:
    members = tuple(int(j) for j in members)
    rows, counts = data.patterns(members)
    if len(members) == 1:
        params = (VariableParams(float(alpha_hat[members[0]]), 0.0, 1),)
        loglik = _block_loglik(BlockSpec(members, params), rows, counts)
        return BlockFit(members, params, loglik)
    if len(members) == 2:
        pair = fit_pair(data, members[0], members[1], alpha_hat)
        loglik = _block_loglik(BlockSpec(members, pair.params), rows, counts)
        return BlockFit(members, pair.params, loglik, warnings=list(pair.warnings))
    return em_fit_block(members, data, alpha_hat, cfg)


def fit(
    data: BinaryDataset,
    partition: Partition,
    cfg: FitConfig | None = None,
    cache: BlockFitCache | None = None,
    margins: MarginResult | None = None,
) -> FittedModel:
    """IFM fit of a fixed partition; never fails on valid input."""
    cfg = cfg or FitConfig()
    if partition.d != data.d:
        raise PartitionMismatchError(f"partition covers {partition.d} variables, data has {data.d} columns")
    if margins is None:
        margins = margin_step(data)
    if cache is None:
        cache = BlockFitCache(enabled=False)

    def one(members):
        return cache.get_or_compute(members, lambda: fit_block(members, data, margins.alpha, cfg))

    block_fits = parallel_map(one, partition.blocks(), cfg.threads)

    params: list[VariableParams | None] = [None] * data.d
    for block_fit in block_fits:
        for j, vp in zip(block_fit.members, block_fit.params):
            params[j] = vp
    model = Model(partition, tuple(params), data.names)
    loglik = float(sum(b.loglik for b in block_fits))
    n_params = count_params(partition)

    fit_warnings = list(margins.warnings)
    for block_fit in block_fits:
        fit_warnings.extend(block_fit.warnings)
    return FittedModel(
        model=model,
        loglik=loglik,
        bic=bic_value(loglik, n_params, data.n),
        n=data.n,
        n_params=n_params,
        block_fits=list(block_fits),
        warnings=fit_warnings,
    )
