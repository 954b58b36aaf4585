# ===============================================================
# blockfactor — Shared command helpers (dependencies.py)
# ===============================================================
# What every subcommand needs: the global CLI state, input
# loading, config objects built from options, and the mapping of
# library errors onto process exit codes.
# ===============================================================

import json
import platform
from contextlib import contextmanager
from importlib import metadata
from pathlib import Path
from typing import Any

import click
from pydantic import ValidationError

from blockfactor import __version__
from blockfactor.core.config import settings
from blockfactor.core.logging import get_logger
from blockfactor.distribution import BinaryDataset, Model
from blockfactor.errors import BlockFactorError, DataFormatError, InvalidOptionError
from blockfactor.estimation import FitConfig
from blockfactor.storage import read_dataset, read_model

logger = get_logger(__name__)


class CliState:
    """Global options, handed to subcommands through the click context."""

    def __init__(self):
        self.threads: int | None = None
        self.verbose = False


pass_state = click.make_pass_decorator(CliState, ensure=True)


class CommandFailed(click.ClickException):
    """A library error on its way out: one stderr line plus its exit code."""

    def __init__(self, error: BlockFactorError):
        super().__init__(error.detail)
        self.exit_code = error.exit_code


@contextmanager
def exit_codes():
    """Translate library and option errors to the documented exit codes."""
    try:
        yield
    except BlockFactorError as e:
        logger.debug(f"{type(e).__name__}: {e.detail}")
        raise CommandFailed(e) from None
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'value'}: {err['msg']}" for err in e.errors())
        raise CommandFailed(InvalidOptionError(f"invalid option ({problems})")) from None
    except click.UsageError as e:
        e.exit_code = InvalidOptionError.exit_code
        raise


# ===============================================================
# Inputs
# ===============================================================

def load_dataset(path: str) -> BinaryDataset:
    data = read_dataset(path)
    logger.info(f"{path}: {data.n} rows, {data.d} columns")
    return data


def load_model(path: str, data: BinaryDataset | None = None) -> Model:
    """Model JSON, aligned to the dataset's column order when one is given."""
    return read_model(path, data.names if data is not None else None)


def load_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataFormatError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}") from None


# ===============================================================
# Options -> configs
# ===============================================================

def resolve_seed(seed: int | None) -> int:
    return settings.DEFAULT_SEED if seed is None else seed


def fit_config(state: CliState, restarts: int, tol: float, max_iter: int, seed: int | None) -> FitConfig:
    return FitConfig(
        restarts=restarts,
        tol=tol,
        max_iter=max_iter,
        seed=resolve_seed(seed),
        threads=state.threads,
    )


# ===============================================================
# Provenance
# ===============================================================

def package_versions() -> dict[str, str]:
    versions = {"blockfactor": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "pandas", "scikit-learn", "pydantic", "click"):
        try:
            versions[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            versions[dist] = "unknown"
    return versions


def version_string() -> str:
    return f"{settings.APP_NAME} {__version__} ({settings.BUILD_HASH})"
