# ===============================================================
# blockfactor — Command-line Entry Point
# ===============================================================
# Builds the click root group, applies the global options and
# auto-loads every subcommand module from blockfactor/commands/,
# so a new command only needs a file exposing `command`.
# ===============================================================

from importlib import import_module
from pathlib import Path

import click

from blockfactor.core.config import settings
from blockfactor.core.logging import get_logger, setup_logging
from blockfactor.dependencies import CliState, exit_codes, pass_state, version_string

logger = get_logger(__name__)


class BlockFactorGroup(click.Group):
    """Root group whose errors, parsing included, follow the exit-code table."""

    def make_context(self, info_name, args, parent=None, **extra):
        with exit_codes():
            return super().make_context(info_name, args, parent=parent, **extra)

    def invoke(self, ctx):
        with exit_codes():
            return super().invoke(ctx)


def _print_version(ctx: click.Context, _param, value: bool) -> None:
    if not value or ctx.resilient_parsing:
        return
    click.echo(version_string())
    ctx.exit()


@click.group(cls=BlockFactorGroup)
@click.option(
    "--threads",
    type=click.IntRange(min=0),
    default=None,
    help="Worker threads for library calls (0 = one per CPU). Defaults to BLOCKFACTOR_THREADS.",
)
@click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr.")
@click.option(
    "--version",
    is_flag=True,
    expose_value=False,
    is_eager=True,
    callback=_print_version,
    help="Print version and build hash, then exit.",
)
@pass_state
def cli(state: CliState, threads: int | None, verbose: bool):
    """Blockwise one-factor models for binary data."""
    state.threads = threads
    state.verbose = verbose
    setup_logging("DEBUG" if verbose else settings.LOG_LEVEL)


# ===============================================================
# Dynamic Command Auto-Loading
# ===============================================================
# Every module in blockfactor/commands/ that defines `command`
# becomes a subcommand under the command's own name.

commands_path = Path(__file__).parent / "commands"

for file in sorted(commands_path.glob("*.py")):
    if file.stem.startswith("__"):
        continue
    module_name = f"blockfactor.commands.{file.stem}"
    try:
        module = import_module(module_name)
    except ImportError as e:
        logger.warning(f"Skipped {module_name}: {e}")
        continue
    if hasattr(module, "command"):
        cli.add_command(getattr(module, "command"))
        logger.debug(f"Loaded command: {module_name}")


def main() -> None:
    cli(prog_name=settings.APP_NAME)
