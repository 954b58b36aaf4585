"""
Blockwise one-factor distribution for binary vectors.

Variables are split into independent blocks. Inside a block every variable
is conditionally independent given one latent U ~ Uniform(0, 1): X_j is
Bernoulli(lambda_j) when U < beta_j and Bernoulli(nu_j) otherwise. Sorting
the block by beta cuts [0, 1] into d_b + 1 segments on which the conditional
pmf is constant, which gives the closed-form block pmf used everywhere below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from blockfactor.errors import InvalidOptionError, PartitionMismatchError

# λ and ν are kept this far away from {0, 1} inside logarithms
PROB_FLOOR = 1e-12
EPSILON_MAX = 1.0 - 1e-9


# ===============================================================
# Parameters
# ===============================================================

@dataclass(frozen=True)
class VariableParams:
    """(alpha, epsilon, delta) of one variable."""

    alpha: float
    epsilon: float = 0.0
    delta: int = 1

    def __post_init__(self):
        alpha, epsilon, delta = float(self.alpha), float(self.epsilon), int(self.delta)
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
        if not 0.0 <= epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {epsilon!r}")
        if delta not in (0, 1):
            raise ValueError(f"delta must be 0 or 1, got {self.delta!r}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "epsilon", epsilon)
        object.__setattr__(self, "delta", delta)

    @property
    def beta(self) -> float:
        return self.alpha if self.delta == 1 else 1.0 - self.alpha

    @property
    def lam(self) -> float:
        return (1.0 - self.epsilon) * self.alpha + self.epsilon * self.delta

    @property
    def nu(self) -> float:
        return (1.0 - self.epsilon) * self.alpha + self.epsilon * (1 - self.delta)

    @property
    def sign(self) -> int:
        return 1 if self.delta == 1 else -1

    def flipped(self) -> "VariableParams":
        return VariableParams(self.alpha, self.epsilon, 1 - self.delta)

    def replace(self, **changes) -> "VariableParams":
        values = {"alpha": self.alpha, "epsilon": self.epsilon, "delta": self.delta}
        values.update(changes)
        return VariableParams(**values)


def derive(vp: VariableParams) -> tuple[float, float, float]:
    """Return (beta, lambda, nu) for one variable."""
    return vp.beta, vp.lam, vp.nu


# ===============================================================
# Partition
# ===============================================================

def _relabel(labels: Iterable[int]) -> tuple[int, ...]:
    mapping: dict[int, int] = {}
    out = []
    for label in labels:
        if label not in mapping:
            mapping[label] = len(mapping)
        out.append(mapping[label])
    return tuple(out)


@dataclass(frozen=True)
class Partition:
    """Assignment of variables to blocks.

    Labels are stored 0-based in order of first appearance, so two
    partitions with the same blocks compare (and hash) equal.
    """

    labels: tuple[int, ...]

    def __post_init__(self):
        raw = tuple(int(v) for v in self.labels)
        if not raw:
            raise PartitionMismatchError("a partition needs at least one variable")
        object.__setattr__(self, "labels", _relabel(raw))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        return cls(tuple(labels))

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]], d: int | None = None) -> "Partition":
        """Build from explicit groups of variable indices covering 0..d-1."""
        seen: dict[int, int] = {}
        for b, group in enumerate(groups):
            if len(group) == 0:
                raise PartitionMismatchError(f"group {b} is empty")
            for j in group:
                j = int(j)
                if j in seen:
                    raise PartitionMismatchError(f"variable {j} appears in more than one group")
                seen[j] = b
        d = len(seen) if d is None else d
        if sorted(seen) != list(range(d)):
            missing = sorted(set(range(d)) - set(seen))
            extra = sorted(set(seen) - set(range(d)))
            raise PartitionMismatchError(
                f"groups must cover variables 0..{d - 1} exactly (missing={missing}, unknown={extra})"
            )
        return cls(tuple(seen[j] for j in range(d)))

    @classmethod
    def singletons(cls, d: int) -> "Partition":
        return cls(tuple(range(d)))

    @classmethod
    def single_block(cls, d: int) -> "Partition":
        return cls((0,) * d)

    @property
    def d(self) -> int:
        return len(self.labels)

    @property
    def n_blocks(self) -> int:
        return max(self.labels) + 1

    def blocks(self) -> tuple[tuple[int, ...], ...]:
        groups: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for j, label in enumerate(self.labels):
            groups[label].append(j)
        return tuple(tuple(g) for g in groups)

    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.blocks())

    def move(self, j: int, label: int) -> "Partition":
        """Reassign variable j to block `label` (n_blocks opens a new block)."""
        if not 0 <= label <= self.n_blocks:
            raise ValueError(f"label {label} outside 0..{self.n_blocks}")
        labels = list(self.labels)
        labels[j] = label
        return Partition(tuple(labels))

    def refines(self, other: "Partition") -> bool:
        """True when every block of self sits inside one block of other."""
        if other.d != self.d:
            return False
        for block in self.blocks():
            if len({other.labels[j] for j in block}) != 1:
                return False
        return True

    def __str__(self) -> str:
        return "|".join(",".join(str(j) for j in block) for block in self.blocks())


# ===============================================================
# Blocks and models
# ===============================================================

@dataclass(frozen=True)
class BlockSpec:
    members: tuple[int, ...]
    params: tuple[VariableParams, ...]
    # member variable indices in ascending beta order, ties by index
    sigma: tuple[int, ...] = field(init=False)
    order: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        members = tuple(int(j) for j in self.members)
        params = tuple(self.params)
        if len(members) != len(params):
            raise ValueError("members and params must have the same length")
        if not members:
            raise ValueError("a block needs at least one member")
        order = tuple(sorted(range(len(members)), key=lambda p: (params[p].beta, members[p])))
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "sigma", tuple(members[p] for p in order))

    @property
    def size(self) -> int:
        return len(self.members)

    def sorted_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(beta, lambda, nu) along sigma."""
        ps = [self.params[p] for p in self.order]
        return (
            np.array([p.beta for p in ps]),
            np.array([p.lam for p in ps]),
            np.array([p.nu for p in ps]),
        )


@dataclass(frozen=True)
class Model:
    partition: Partition
    params: tuple[VariableParams, ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        params = tuple(self.params)
        if len(params) != self.partition.d:
            raise PartitionMismatchError(
                f"model has {len(params)} parameter triples for {self.partition.d} variables"
            )
        object.__setattr__(self, "params", params)
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != len(params):
                raise PartitionMismatchError("model names do not match the number of variables")
            object.__setattr__(self, "names", names)

    @property
    def d(self) -> int:
        return self.partition.d

    def block(self, members: Sequence[int]) -> BlockSpec:
        return BlockSpec(tuple(members), tuple(self.params[j] for j in members))

    def blocks(self) -> list[BlockSpec]:
        return [self.block(members) for members in self.partition.blocks()]

    def is_canonical(self) -> bool:
        return canonicalize(self) == self

    def variable_names(self) -> tuple[str, ...]:
        return self.names if self.names is not None else default_names(self.d)


def default_names(d: int) -> tuple[str, ...]:
    return tuple(f"X{j + 1}" for j in range(d))


# ===============================================================
# Dataset
# ===============================================================

@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """Immutable n x d matrix over {0, 1} with column names."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"dataset must be two-dimensional, got shape {values.shape}")
        if values.size and not np.isin(values, (0, 1)).all():
            raise ValueError("dataset entries must all be 0 or 1")
        names = tuple(str(n) for n in self.names)
        if len(names) != values.shape[1]:
            raise ValueError(f"{len(names)} names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        frozen = np.array(values, dtype=np.uint8, copy=True)
        frozen.setflags(write=False)
        object.__setattr__(self, "values", frozen)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_array(cls, values, names: Sequence[str] | None = None) -> "BinaryDataset":
        values = np.asarray(values)
        return cls(values, tuple(names) if names is not None else default_names(values.shape[1]))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def patterns(self, columns: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows restricted to `columns` with their counts."""
        sub = self.values[:, list(columns)]
        if sub.shape[0] == 0:
            return sub, np.zeros(0, dtype=np.int64)
        rows, counts = np.unique(sub, axis=0, return_counts=True)
        return rows, counts

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryDataset):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)

    __hash__ = None


# ===============================================================
# Block pmf
# ===============================================================

def _as_rows(block: BlockSpec, x) -> np.ndarray:
    rows = np.asarray(x, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[1] != block.size:
        raise PartitionMismatchError(
            f"block has {block.size} members but got observations of width {rows.shape[-1]}"
        )
    return rows


def segment_log_weights(block: BlockSpec, x) -> np.ndarray:
    """log((beta_(k+1) - beta_(k)) * f_b(k)) for every row and segment k.

    Returns an (m, d_b + 1) array; zero-width segments are -inf.
    """
    rows = _as_rows(block, x)[:, list(block.order)]
    betas, lam, nu = block.sorted_arrays()
    lam = np.clip(lam, PROB_FLOOR, 1.0 - PROB_FLOOR)
    nu = np.clip(nu, PROB_FLOOR, 1.0 - PROB_FLOOR)

    log_lam = rows * np.log(lam) + (1.0 - rows) * np.log1p(-lam)
    log_nu = rows * np.log(nu) + (1.0 - rows) * np.log1p(-nu)

    m = rows.shape[0]
    zero = np.zeros((m, 1))
    # prefix sums: the first k sorted variables sit above u in segment k
    nu_prefix = np.hstack([zero, np.cumsum(log_nu, axis=1)])
    lam_prefix = np.hstack([zero, np.cumsum(log_lam, axis=1)])
    lam_suffix = lam_prefix[:, -1:] - lam_prefix
    log_f = nu_prefix + lam_suffix

    widths = np.diff(np.concatenate([[0.0], betas, [1.0]]))
    with np.errstate(divide="ignore"):
        log_widths = np.log(np.clip(widths, 0.0, None))
    return log_f + log_widths


def block_log_pmf(block: BlockSpec, x) -> np.ndarray:
    """Log pmf of each row of `x` (columns in block member order)."""
    return logsumexp(segment_log_weights(block, x), axis=1)


def block_pmf(block: BlockSpec, x) -> float:
    """Closed-form pmf of one observation of the block."""
    rows = _as_rows(block, x)
    if rows.shape[0] != 1:
        raise PartitionMismatchError("block_pmf takes a single observation; use block_log_pmf for many")
    return float(np.exp(block_log_pmf(block, rows)[0]))


# ===============================================================
# Joint pmf and likelihood
# ===============================================================

def joint_log_pmf(model: Model, x) -> float:
    """Sum of block log-pmfs; -inf when some block has probability zero."""
    x = np.asarray(x)
    if x.shape != (model.d,):
        raise PartitionMismatchError(f"expected a vector of length {model.d}, got shape {x.shape}")
    total = 0.0
    for block in model.blocks():
        value = float(block_log_pmf(block, x[list(block.members)])[0])
        if value == -np.inf:
            return -np.inf
        total += value
    return total


def log_likelihood(model: Model, data: BinaryDataset) -> float:
    if data.d != model.d:
        raise PartitionMismatchError(f"model has {model.d} variables, data has {data.d} columns")
    total = 0.0
    for block in model.blocks():
        rows, counts = data.patterns(block.members)
        if len(counts):
            total += float(np.dot(counts, block_log_pmf(block, rows)))
    return total


# ===============================================================
# Sampling
# ===============================================================

def sample(model: Model, n: int, seed: int | np.random.SeedSequence) -> BinaryDataset:
    """Draw n rows: one latent uniform per block, then Bernoulli per variable."""
    if n < 1:
        raise InvalidOptionError(f"sample size must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    labels = np.array(model.partition.labels)
    betas = np.array([p.beta for p in model.params])
    lam = np.array([p.lam for p in model.params])
    nu = np.array([p.nu for p in model.params])

    latent = rng.random((n, model.partition.n_blocks))
    noise = rng.random((n, model.d))
    below = latent[:, labels] < betas
    prob = np.where(below, lam, nu)
    values = (noise < prob).astype(np.uint8)
    return BinaryDataset(values, model.variable_names())


# ===============================================================
# Dependency measures
# ===============================================================

def pair_table(vp_a: VariableParams, vp_b: VariableParams, same_block: bool) -> tuple[float, float, float, float]:
    """Joint table (p11, p10, p01, p00) of two variables."""
    p11 = pair_prob(vp_a, vp_b, same_block)
    p10 = vp_a.alpha - p11
    p01 = vp_b.alpha - p11
    p00 = 1.0 - vp_a.alpha - vp_b.alpha + p11
    return p11, p10, p01, p00


def pair_prob(vp_a: VariableParams, vp_b: VariableParams, same_block: bool) -> float:
    """P(X_a = 1, X_b = 1)."""
    independent = vp_a.alpha * vp_b.alpha
    if not same_block:
        return independent
    low, high = sorted((vp_a.beta, vp_b.beta))
    shift = vp_a.epsilon * vp_b.epsilon * low * (1.0 - high)
    return independent + vp_a.sign * vp_b.sign * shift


def model_cramers_v(model: Model, j: int, k: int) -> float:
    if j == k:
        raise ValueError("Cramer's V needs two distinct variables")
    if model.partition.labels[j] != model.partition.labels[k]:
        return 0.0
    a, b = model.params[j], model.params[k]
    low, high = sorted((a.beta, b.beta))
    return a.epsilon * b.epsilon * float(np.sqrt(low * (1.0 - high) / (high * (1.0 - low))))


def model_cramers_v_matrix(model: Model) -> np.ndarray:
    """Model-implied Cramer's V for every pair (ones on the diagonal)."""
    out = np.eye(model.d)
    for members in model.partition.blocks():
        for pos, j in enumerate(members):
            for k in members[pos + 1:]:
                out[j, k] = out[k, j] = model_cramers_v(model, j, k)
    return out


# ===============================================================
# Identifiable form
# ===============================================================

def _leading_delta(params: Sequence[VariableParams], keys: Sequence) -> int:
    first = min(range(len(params)), key=lambda p: (params[p].beta, keys[p]))
    return params[first].delta


def canonical_block_params(
    members: tuple[int, ...],
    params: list[VariableParams],
    keys: Sequence | None = None,
) -> list[VariableParams]:
    """One representative of {params, params with every delta flipped}.

    `keys` order the members for ties (column names keep the choice
    attached to the variables; default is the member index).
    """
    keys = list(members) if keys is None else list(keys)
    if len(members) == 1:
        return [VariableParams(params[0].alpha, 0.0, 1)]
    if len(members) == 2 and params[0].epsilon != params[1].epsilon:
        shared = float(np.sqrt(params[0].epsilon * params[1].epsilon))
        params = [p.replace(epsilon=shared) for p in params]
    flipped = [p.flipped() for p in params]
    lead, lead_flipped = _leading_delta(params, keys), _leading_delta(flipped, keys)
    if lead != lead_flipped:
        return params if lead == 1 else flipped
    # both orientations, or neither, start with delta=1: anchor on the smallest key
    anchor = min(range(len(params)), key=keys.__getitem__)
    return params if params[anchor].delta == 1 else flipped


def canonicalize(model: Model) -> Model:
    """Observationally equivalent model in identifiable form."""
    params = list(model.params)
    names = model.variable_names()
    for members in model.partition.blocks():
        keys = [names[j] for j in members]
        fixed = canonical_block_params(members, [params[j] for j in members], keys)
        for j, vp in zip(members, fixed):
            params[j] = vp
    return Model(model.partition, tuple(params), model.names)
