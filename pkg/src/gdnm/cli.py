"""CLI entry point for gdnm."""

from __future__ import annotations

import sys
from collections.abc import Callable
from pathlib import Path
from typing import TYPE_CHECKING, Any

import click
from rich.console import Console

from gdnm import __version__
from gdnm.config import EXPERIMENTS, ConfigError
from gdnm.embedding import AccuracyError, NonCenteredError
from gdnm.ensemble import PreconditionError
from gdnm.kernel import ScanLimitError, WindowTooSmallError
from gdnm.stats import ConditioningError

if TYPE_CHECKING:
    from gdnm.config import AppConfig, ExperimentConfig
    from gdnm.experiments import RunResult

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# Simulation failures that map to EXIT_RUNTIME
RUNTIME_ERRORS = (
    ScanLimitError,
    WindowTooSmallError,
    PreconditionError,
    ConditioningError,
    NonCenteredError,
    AccuracyError,
)


class Context:
    """Shared CLI context passed to all commands."""

    def __init__(
        self,
        *,
        config_path: Path | None = None,
        verbose: bool = False,
        json_output: bool = False,
    ) -> None:
        self.config_path = config_path
        self.verbose = verbose
        self.json_output = json_output
        self.console = Console(quiet=json_output)
        self.config: AppConfig | None = None

    def load_config(self) -> AppConfig:
        """Load and cache the application config."""
        if self.config is None:
            from gdnm.config import load_config

            self.config = load_config(self.config_path)
        return self.config


pass_context = click.make_pass_decorator(Context, ensure=True)


@click.group()
@click.version_option(version=__version__, prog_name="gdnm")
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Path to YAML config file.",
)
@click.option("--verbose", is_flag=True, help="Show detailed output.")
@click.option("--json", "json_output", is_flag=True, help="Machine-readable JSON output.")
@click.pass_context
def main(
    ctx: click.Context,
    config_path: Path | None,
    verbose: bool,
    json_output: bool,
) -> None:
    """Generalized drainage network simulator and verification harness.

    \b
    Examples:
      gdnm list                               Show available experiments
      gdnm increment                          Exact one-step law with defaults
      gdnm tail --config gdnm.yaml --plot     Coalescence tail curve with SVG
      gdnm pair --seed 7 --workers 8          Pair meeting check on 8 processes
    """
    ctx.obj = Context(config_path=config_path, verbose=verbose, json_output=json_output)


def _print_result(ctx: Context, result: RunResult) -> None:
    if ctx.json_output:
        import json

        from gdnm.results import load_summary

        print(json.dumps(load_summary(result.summary_path), indent=2))
        return

    from rich.table import Table

    for series in result.series:
        table = Table(title=f"{series.name} (seed {result.seed})")
        table.add_column(series.grid_label, style="bold cyan")
        table.add_column("estimate")
        table.add_column("ci_low")
        table.add_column("ci_high")
        table.add_column("n")
        for row in series.rows:
            table.add_row(
                f"{row.grid:g}",
                f"{row.estimate:.6g}",
                f"{row.ci_low:.6g}",
                f"{row.ci_high:.6g}",
                str(row.n),
            )
        ctx.console.print(table)
        for key, value in series.derived.items():
            if isinstance(value, list) and len(value) > 8:
                continue
            ctx.console.print(f"  [bold]{key}[/]: {value}")

    ctx.console.print(
        f"\n[bold green]Wrote {len(result.files) + 1} file(s)[/] to {result.summary_path.parent}"
    )


def run(config: ExperimentConfig, ctx: Context | None = None) -> int:
    """Run one experiment; returns the process exit status."""
    ctx = ctx or Context()
    from gdnm.experiments import run_experiment

    try:
        result = run_experiment(config, ctx)
    except RUNTIME_ERRORS as exc:
        ctx.console.print(f"[bold red]Runtime error:[/] {exc}")
        return EXIT_RUNTIME
    except OSError as exc:
        ctx.console.print(f"[bold red]I/O error:[/] {exc}")
        return EXIT_RUNTIME
    except (ConfigError, ValueError) as exc:
        ctx.console.print(f"[bold red]Config error:[/] {exc}")
        return EXIT_CONFIG

    _print_result(ctx, result)
    return EXIT_OK


def _experiment_options(func: Callable[..., Any]) -> Callable[..., Any]:
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(dir_okay=False, path_type=Path),
            default=None,
            help="Path to YAML config file.",
        ),
        click.option(
            "--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed."
        ),
        click.option("--workers", type=click.IntRange(min=1), default=None, help="Processes."),
        click.option(
            "--replicas", type=click.IntRange(min=1), default=None, help="Replica count."
        ),
        click.option(
            "--out",
            "out_dir",
            type=click.Path(file_okay=False, path_type=Path),
            default=None,
            help="Output directory.",
        ),
        click.option("--plot/--no-plot", default=None, help="Write SVG plots."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _make_command(name: str) -> click.Command:
    from gdnm.experiments import DESCRIPTIONS

    @_experiment_options
    @pass_context
    def command(
        ctx: Context,
        config_path: Path | None,
        seed: int | None,
        workers: int | None,
        replicas: int | None,
        out_dir: Path | None,
        plot: bool | None,
    ) -> None:
        if config_path is not None:
            ctx.config_path = config_path
            ctx.config = None

        from gdnm.config import experiment_config

        try:
            config = ctx.load_config()
            exp = experiment_config(
                config,
                name,
                seed=seed,
                workers=workers,
                replicas=replicas,
                out_dir=out_dir,
                plot=plot,
            )
        except ConfigError as exc:
            ctx.console.print(f"[bold red]Config error:[/] {exc}")
            sys.exit(EXIT_CONFIG)

        if ctx.verbose:
            source = ctx.config_path or config.config_file_path or "default"
            ctx.console.print(f"[dim]Config: {source}[/]")

        status = run(exp, ctx)
        if status != EXIT_OK:
            sys.exit(status)

    return main.command(name, help=DESCRIPTIONS[name] + ".")(command)


for _name in EXPERIMENTS:
    _make_command(_name)


@main.command("list")
@pass_context
def list_experiments(ctx: Context) -> None:
    """Show available experiments."""
    from gdnm.experiments import DESCRIPTIONS

    if ctx.json_output:
        import json

        print(json.dumps(DESCRIPTIONS, indent=2))
        return

    from rich.table import Table

    table = Table(title="Experiments")
    table.add_column("Name", style="bold cyan")
    table.add_column("Description")
    for name in EXPERIMENTS:
        table.add_row(name, DESCRIPTIONS[name])
    ctx.console.print(table)


if __name__ == "__main__":
    main()
