# ===============================================================
# blockfactor — Data Layer (storage.py)
# ===============================================================
# Reads and writes every artifact the CLI touches: binary CSV
# datasets, partitions, model / selection JSON documents and CSV
# tables. Parsing is strict: a bad cell is an error, never coerced.
# ===============================================================

import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from blockfactor.core.logging import get_logger
from blockfactor.distribution import BinaryDataset, Model, Partition, VariableParams
from blockfactor.errors import DataFormatError, PartitionMismatchError
from blockfactor.estimation import FittedModel
from blockfactor.models import (
    BlockDoc,
    CandidateDoc,
    EmTraceDoc,
    ModelDocument,
    SelectionDocument,
    VariableParamsDoc,
)
from blockfactor.selection import SelectionResult

logger = get_logger(__name__)


# ===============================================================
# Datasets
# ===============================================================

def read_dataset(path: str | Path) -> BinaryDataset:
    """Header row plus cells that are exactly "0" or "1"."""
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, na_values=[])
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path}: file is empty") from None
    except pd.errors.ParserError as e:
        raise DataFormatError(f"{path}: ragged rows ({e})") from None
    except FileNotFoundError:
        raise DataFormatError(f"{path}: no such file") from None

    names = list(raw.iloc[0])
    if any(pd.isna(name) or name == "" for name in names):
        raise DataFormatError(f"{path}: header has an empty column name")
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise DataFormatError(f"{path}: duplicate column names {duplicates}")

    body = raw.iloc[1:]
    if body.empty:
        raise DataFormatError(f"{path}: no data rows")
    missing = body.isna().to_numpy()
    if missing.any():
        row, col = map(int, np.argwhere(missing)[0])
        raise DataFormatError(f"{path}: row {row + 2} is shorter than the header (column {names[col]!r} missing)")
    cells = body.to_numpy()
    bad = ~np.isin(cells, ["0", "1"])
    if bad.any():
        row, col = map(int, np.argwhere(bad)[0])
        raise DataFormatError(
            f"{path}: row {row + 2}, column {names[col]!r}: expected 0 or 1, got {cells[row, col]!r}"
        )
    values = (cells == "1").astype(np.uint8)
    logger.debug(f"loaded {values.shape[0]} rows x {values.shape[1]} columns from {path}")
    return BinaryDataset(values, tuple(names))


def dataset_to_csv(data: BinaryDataset) -> str:
    frame = pd.DataFrame(data.values, columns=list(data.names))
    return frame.to_csv(index=False, lineterminator="\n")


# ===============================================================
# Partitions
# ===============================================================

def parse_partition(spec: str, names: Sequence[str]) -> Partition:
    """Partition from a JSON list of name groups or a label vector.

    Accepted: '[["A","B"],["C"]]', '[0,0,1]' or '0,0,1'. Group entries
    may also be bare names: '[[A,B],[C]]'.
    """
    text = spec.strip()
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError:
        parsed = _loose_partition(text)

    names = list(names)
    if isinstance(parsed, list) and parsed and all(isinstance(g, list) for g in parsed):
        index = {name: j for j, name in enumerate(names)}
        groups = []
        for group in parsed:
            unknown = [str(v) for v in group if str(v) not in index]
            if unknown:
                raise PartitionMismatchError(f"partition names unknown column(s) {unknown}")
            groups.append([index[str(v)] for v in group])
        return Partition.from_groups(groups, len(names))

    if isinstance(parsed, list) and all(isinstance(v, int) for v in parsed):
        if len(parsed) != len(names):
            raise PartitionMismatchError(f"label vector has {len(parsed)} entries for {len(names)} columns")
        return Partition.from_labels(parsed)
    raise PartitionMismatchError(f"cannot read partition {spec!r}")


def _loose_partition(text: str):
    if text.startswith("[["):
        groups = []
        for chunk in text[2:-2].split("],"):
            chunk = chunk.strip().lstrip("[").rstrip("]")
            groups.append([item.strip().strip("'\"") for item in chunk.split(",") if item.strip()])
        return groups
    try:
        return [int(v) for v in text.strip("[]").split(",")]
    except ValueError:
        raise PartitionMismatchError(f"cannot read partition {text!r}") from None


def partition_groups(partition: Partition, names: Sequence[str]) -> list[list[str]]:
    return [[names[j] for j in block] for block in partition.blocks()]


# ===============================================================
# Model documents
# ===============================================================

def model_to_document(model: Model, fitted: FittedModel | None = None, seed: int | None = None) -> ModelDocument:
    names = model.variable_names()
    blocks = [
        BlockDoc(
            variables=[names[j] for j in members],
            params=[VariableParamsDoc(alpha=p.alpha, epsilon=p.epsilon, delta=p.delta) for p in (model.params[j] for j in members)],
        )
        for members in model.partition.blocks()
    ]
    doc = ModelDocument(variables=list(names), blocks=blocks, seed=seed)
    if fitted is not None:
        doc.loglik = fitted.loglik
        doc.bic = fitted.bic
        doc.n = fitted.n
        doc.n_params = fitted.n_params
        doc.warnings = list(fitted.warnings)
        doc.em_trace = [
            EmTraceDoc(
                variables=[names[j] for j in trace["members"]],
                n_iter=trace["n_iter"],
                best_restart=trace["best_restart"],
                restart_logliks=trace["restart_logliks"],
            )
            for trace in fitted.em_trace()
        ]
    return doc


def document_to_model(doc: ModelDocument, names: Sequence[str] | None = None) -> Model:
    """Rebuild a Model; `names` reorders it to a dataset's columns."""
    order = list(names) if names is not None else (doc.variables or [v for b in doc.blocks for v in b.variables])
    index = {name: j for j, name in enumerate(order)}
    labels: list[int | None] = [None] * len(order)
    params: list[VariableParams | None] = [None] * len(order)
    for b, block in enumerate(doc.blocks):
        if len(block.variables) != len(block.params):
            raise PartitionMismatchError(f"block {b} lists {len(block.variables)} variables and {len(block.params)} parameter sets")
        for name, p in zip(block.variables, block.params):
            if name not in index:
                raise PartitionMismatchError(f"model variable {name!r} is not a data column")
            if labels[index[name]] is not None:
                raise PartitionMismatchError(f"model variable {name!r} appears twice")
            labels[index[name]] = b
            try:
                params[index[name]] = VariableParams(p.alpha, p.epsilon, p.delta)
            except ValueError as e:
                raise DataFormatError(f"variable {name!r}: {e}") from None
    missing = [order[j] for j, label in enumerate(labels) if label is None]
    if missing:
        raise PartitionMismatchError(f"model does not cover column(s) {missing}")
    return Model(Partition(tuple(labels)), tuple(params), tuple(order))


def read_model_document(path: str | Path) -> ModelDocument:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataFormatError(f"{path}: no such file") from None
    try:
        return ModelDocument.model_validate_json(text)
    except ValidationError as e:
        raise DataFormatError(f"{path}: not a model document ({e.error_count()} errors)") from None


def read_model(path: str | Path, names: Sequence[str] | None = None) -> Model:
    return document_to_model(read_model_document(path), names)


# ===============================================================
# Selection documents
# ===============================================================

def selection_to_document(result: SelectionResult, names: Sequence[str], seed: int | None = None) -> SelectionDocument:
    return SelectionDocument(
        method=result.method,
        best=model_to_document(result.best.model, result.best, seed),
        candidates=[
            CandidateDoc(
                blocks=partition_groups(c.partition, names),
                n_blocks=c.n_blocks,
                n_params=c.n_params,
                loglik=c.loglik,
                bic=c.bic,
            )
            for c in result.candidates
        ],
        diagnostics=result.diagnostics,
        warnings=list(dict.fromkeys(result.warnings)),
    )


def candidates_to_csv(result: SelectionResult, names: Sequence[str]) -> str:
    frame = pd.DataFrame(
        [
            {
                "blocks": str(c.partition) if not names else "|".join(",".join(g) for g in partition_groups(c.partition, names)),
                "n_blocks": c.n_blocks,
                "n_params": c.n_params,
                "loglik": repr(c.loglik),
                "bic": repr(c.bic),
            }
            for c in result.candidates
        ]
    )
    return frame.to_csv(index=False, lineterminator="\n")


# ===============================================================
# Output helpers
# ===============================================================

def dump_json(document: Any) -> str:
    """Sorted keys, shortest round-trip floats: byte-stable output."""
    if hasattr(document, "model_dump"):
        document = document.model_dump(mode="json")
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=True) + "\n"


def matrix_to_csv(matrix: np.ndarray, names: Sequence[str], comment: str | None = None) -> str:
    buffer = io.StringIO()
    if comment:
        buffer.write(f"# {comment}\n")
    frame = pd.DataFrame(matrix, index=list(names), columns=list(names))
    frame.index.name = "variable"
    frame.to_csv(buffer, lineterminator="\n", float_format="%.17g")
    return buffer.getvalue()


def write_output(text: str, path: str | Path | None) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    Path(path).write_text(text, encoding="utf-8")
    logger.info(f"wrote {path}")
