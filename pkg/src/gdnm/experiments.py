"""Named experiments: run the estimators for one ExperimentConfig and write its result files."""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn

from gdnm import stats
from gdnm.ensemble import evolve
from gdnm.env import EnvOracle, Site, replica_seeds
from gdnm.kernel import pair_step_law
from gdnm.plot import plot
from gdnm.results import (
    Manifest,
    atomic_write,
    output_stem,
    write_series_csv,
    write_summary,
    write_trajectories,
)

if TYPE_CHECKING:
    from gdnm.cli import Context
    from gdnm.config import ExperimentConfig
    from gdnm.stats import EstimateSeries

ProgressHook = Callable[[int, int], None]

# Replica seeds listed under --verbose
_SHOWN_SEEDS = 3


@dataclass
class RunOutput:
    """What a runner hands back: its series plus optional trajectory data."""

    series: list[EstimateSeries]
    trajectories: list[Any] = field(default_factory=list)
    # Seconds spent building each series, by series name
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class RunResult:
    experiment: str
    seed: int
    series: list[EstimateSeries]
    files: list[Path]
    summary_path: Path
    manifest: Manifest
    runtime: float


def _sampling(config: ExperimentConfig, progress: ProgressHook) -> dict[str, Any]:
    return {
        "workers": config.workers,
        "chunk_size": config.chunk_size,
        "confidence": config.confidence,
        "progress": progress,
    }


def _timed(timings: dict[str, float], build: Callable[[], EstimateSeries]) -> EstimateSeries:
    started = time.perf_counter()
    series = build()
    timings[series.name] = time.perf_counter() - started
    return series


def _run_increment(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    timings: dict[str, float] = {}
    series = [
        _timed(
            timings, lambda: stats.increment_table(config.model, p["window"], int(p["zmax"]))
        )
    ]
    if int(p["mc_steps"]) > 0:
        series.append(
            _timed(
                timings,
                lambda: stats.increment_frequencies(
                    config.model,
                    int(p["zmax"]),
                    int(p["mc_steps"]),
                    **_sampling(config, progress),
                ),
            )
        )
    return RunOutput(series, timings=timings)


def _run_tail(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    t_grid = [int(t) for t in p["t_grid"]]
    return RunOutput(
        [
            stats.tail_curve(
                config.model, int(p["k"]), t_grid, config.replicas, **_sampling(config, progress)
            )
        ]
    )


def _run_density(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    t_grid = [int(t) for t in p["t_grid"]]
    return RunOutput(
        [
            stats.density_curve(
                config.model,
                t_grid,
                config.replicas,
                guard=float(p["guard"]),
                **_sampling(config, progress),
            )
        ]
    )


def _run_pair(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    return RunOutput(
        [
            stats.pair_meeting_cdf(
                config.model,
                float(p["d"]),
                [float(t) for t in p["t_grid"]],
                int(p["n"]),
                config.replicas,
                **_sampling(config, progress),
            )
        ]
    )


def _run_donsker(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    return RunOutput(
        [
            stats.joint_marginal_check(
                config.model,
                int(p["n"]),
                [float(s) for s in p["s_grid"]],
                config.replicas,
                **_sampling(config, progress),
            )
        ]
    )


def _run_boxexit(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    return RunOutput(
        [
            stats.box_exit_prob(
                config.model,
                float(p["u"]),
                [float(t) for t in p["t_grid"]],
                float(p["c_box"]),
                float(p["delta"]),
                config.replicas,
                **_sampling(config, progress),
            )
        ]
    )


def _run_eta(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    timings: dict[str, float] = {}
    trend = _timed(
        timings,
        lambda: stats.eta_trend(
            config.model,
            float(p["delta"]),
            float(p["t0"]),
            float(p["t"]),
            float(p["a"]),
            [float(e) for e in p["eps_grid"]],
            config.replicas,
            **_sampling(config, progress),
        ),
    )
    hat = _timed(
        timings,
        lambda: stats.eta_hat_curve(
            config.model,
            float(p["t0"]),
            float(p["t"]),
            float(p["a"]),
            float(p["width"]),
            [float(d) for d in p["delta_grid"]],
            config.replicas,
            margin=float(p["margin"]),
            **_sampling(config, progress),
        ),
    )
    return RunOutput([trend, hat], timings=timings)


def _run_crossing(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    return RunOutput(
        [
            stats.crossing_coalesce_prob(
                config.model,
                [int(m) for m in p["m_grid"]],
                str(p["method"]),
                config.replicas,
                **_sampling(config, progress),
            )
        ]
    )


def _run_p00(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    return RunOutput([stats.p00_curve(config.model, [int(m) for m in config.params["m_grid"]])])


def _run_embed(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    law = pair_step_law(config.model, int(p["separation"]))
    raw = law.pmf
    # Far apart the change is symmetric up to truncation; symmetrize so the mean is exactly 0.
    pmf = {d: 0.5 * (raw.get(d, 0.0) + raw.get(-d, 0.0)) for d in raw}
    total = sum(pmf.values())
    pmf = {d: w / total for d, w in pmf.items()}
    rng = np.random.default_rng(config.model.seed)
    return RunOutput(
        [
            stats.embedding_check(
                pmf,
                [tuple(iv) for iv in p["intervals"]],
                int(p["draws"]),
                rng,
                float(p["accuracy"]),
            )
        ]
    )


def _run_escape(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    return RunOutput(
        [
            stats.escape_curve(
                config.model,
                int(p["k"]),
                float(p["u"]),
                float(p["t"]),
                [float(d) for d in p["delta_grid"]],
                config.replicas,
                **_sampling(config, progress),
            )
        ]
    )


def _run_paths(config: ExperimentConfig, progress: ProgressHook) -> RunOutput:
    p = config.params
    starts = [Site(int(x), int(t)) for x, t in p["starts"]]
    horizon = int(p["horizon"])
    batch = EnvOracle.for_replicas(config.model, np.arange(config.replicas))

    ensembles = []
    crossings = []
    for i in range(config.replicas):
        ens = evolve(batch.replica(i), starts, horizon)
        ensembles.append(ens)
        crossings.append(len(ens.crossings))
        progress(i + 1, config.replicas)

    counts = np.array([ens.class_counts() for ens in ensembles], dtype=np.float64)
    rows = []
    for n in range(horizon + 1):
        mean, lo, hi = stats.mean_interval(counts[:, n], config.confidence)
        rows.append(stats.EstimateRow(starts[0].t + n, mean, lo, hi, config.replicas))

    derived = {"mean_crossings": float(np.mean(crossings))}
    series = stats.EstimateSeries(
        name="paths",
        style="paths",
        rows=rows,
        derived=derived,
        meta={"starts": [[z.x, z.t] for z in starts], "horizon": horizon},
        grid_label="t",
    )
    return RunOutput([series], trajectories=ensembles)


# Maps experiment name to its runner
_RUNNERS: dict[str, Callable[[ExperimentConfig, ProgressHook], RunOutput]] = {
    "increment": _run_increment,
    "tail": _run_tail,
    "density": _run_density,
    "pair": _run_pair,
    "donsker": _run_donsker,
    "boxexit": _run_boxexit,
    "eta": _run_eta,
    "crossing": _run_crossing,
    "p00": _run_p00,
    "embed": _run_embed,
    "escape": _run_escape,
    "paths": _run_paths,
}


DESCRIPTIONS = {
    "increment": "Exact one-step displacement law, optional Monte Carlo frequencies",
    "tail": "P(tau_k > t) over a time grid with the sqrt(t) scaling constant",
    "density": "Occupied density of the central window times sqrt(t)",
    "pair": "Meeting probability of two walkers against the coalescing BM limit",
    "donsker": "KS distance of the rescaled marginal to N(0, s)",
    "boxexit": "Probability that a path born in a box leaves the larger box sideways",
    "eta": "Counting variables eta and eta-hat against the sqrt(pi t) bound",
    "crossing": "Coalescence probability after one step given crossing or meeting",
    "p00": "Probability the separation is unchanged, against its closed-form bracket",
    "embed": "Skorohod embedding checks: pair law, exit times, embedded step law",
    "escape": "Probability the difference walk escapes to u / delta before meeting",
    "paths": "Trajectory dump with class counts and crossings",
}


def run_experiment(config: ExperimentConfig, ctx: Context | None = None) -> RunResult:
    """Run one experiment and write CSV, SVG, trajectory and summary files."""
    console = ctx.console if ctx is not None else Console(quiet=True)
    verbose = ctx.verbose if ctx is not None else False
    runner = _RUNNERS[config.name]

    if verbose:
        console.print(
            f"[dim]Experiment {config.name}: seed {config.model.seed}, "
            f"{config.replicas} replicas, {config.workers} worker(s)[/]"
        )
        shown = min(config.replicas, _SHOWN_SEEDS)
        derived = ", ".join(str(s) for s in replica_seeds(config.model.seed, range(shown)))
        more = ", ..." if config.replicas > shown else ""
        console.print(f"[dim]  replica seeds: {derived}{more}[/]")

    started = time.perf_counter()
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task(f"Running {config.name}...", total=None)

        def hook(done: int, total: int) -> None:
            progress.update(task, description=f"Running {config.name}... {done}/{total}")

        output = runner(config, hook)
    runtime = time.perf_counter() - started
    timings = output.timings or {s.name: runtime for s in output.series}

    seed = config.model.seed
    out_dir = config.out_dir
    manifest = Manifest(seed=seed, config_hash=config.config_hash())
    files: list[Path] = []

    for series in output.series:
        stem = output_stem(config.name, seed, series.name)
        files.append(write_series_csv(series, out_dir / f"{stem}.csv"))
        if config.plot:
            files.append(atomic_write(out_dir / f"{stem}.svg", plot(series)))
        if verbose:
            console.print(
                f"[dim]  {series.name}: {len(series.rows)} row(s) "
                f"in {timings.get(series.name, runtime):.2f}s[/]"
            )

    if output.trajectories:
        stem = output_stem(config.name, seed, "trajectories")
        files.append(write_trajectories(output.trajectories, out_dir / f"{stem}.csv"))

    for path in files:
        manifest.add(path)

    summary = {
        "experiment": config.name,
        "config": config.to_dict(),
        "series": {
            s.name: {"style": s.style, "derived": s.derived, "meta": s.meta} for s in output.series
        },
        "runtimeSeconds": round(runtime, 3),
        "manifest": manifest.to_dict(),
    }
    summary_name = f"{output_stem(config.name, seed)}.summary.json"
    summary_path = write_summary(summary, out_dir / summary_name)

    if verbose:
        console.print(f"[dim]  finished in {runtime:.2f}s[/]")

    return RunResult(
        experiment=config.name,
        seed=seed,
        series=output.series,
        files=files,
        summary_path=summary_path,
        manifest=manifest,
        runtime=runtime,
    )
