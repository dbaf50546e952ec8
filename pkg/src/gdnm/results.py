"""Result files: per-series CSV tables, the JSON summary with its manifest, trajectory dumps."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from gdnm import __version__

if TYPE_CHECKING:
    from gdnm.ensemble import PathEnsemble
    from gdnm.stats import EstimateSeries

CSV_COLUMNS = ("grid", "estimate", "ci_low", "ci_high", "n")
TRAJECTORY_COLUMNS = ("replica", "walker", "t", "x")


@dataclass
class Manifest:
    """Reproducibility record: seed, config hash, code version, output hashes."""

    seed: int
    config_hash: str
    version: str = __version__
    files: dict[str, str] = field(default_factory=dict)

    def add(self, path: Path) -> None:
        self.files[path.name] = file_sha256(path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "configHash": self.config_hash,
            "version": self.version,
            "files": dict(sorted(self.files.items())),
        }


def output_stem(experiment: str, seed: int, series: str | None = None) -> str:
    """File stem: <experiment>_s<seed>, or <experiment>-<series>_s<seed> for extra series."""
    if series is None or series == experiment:
        return f"{experiment}_s{seed}"
    if series.startswith(f"{experiment}-"):
        return f"{series}_s{seed}"
    return f"{experiment}-{series}_s{seed}"


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int | np.integer):
        return str(int(value))
    number = float(value)
    if number.is_integer() and abs(number) < 2**53:
        return str(int(number))
    return repr(number)


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def atomic_write(path: Path, content: str) -> Path:
    """Write text to path via a temp file in the same directory and a rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd, tmp_path = tempfile.mkstemp(dir=path.parent, suffix=".tmp", prefix=f".{path.name}-")
        try:
            with open(fd, "w", encoding="utf-8", newline="") as f:
                f.write(content)
            Path(tmp_path).replace(path)
        except BaseException:
            Path(tmp_path).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise OSError(f"Failed to write {path}: {exc}") from exc
    return path


def series_csv(series: EstimateSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in series.rows:
        writer.writerow(
            [_fmt(row.grid), _fmt(row.estimate), _fmt(row.ci_low), _fmt(row.ci_high), row.n]
        )
    return buf.getvalue()


def write_series_csv(series: EstimateSeries, path: Path) -> Path:
    return atomic_write(path, series_csv(series))


def trajectories_csv(ensembles: list[PathEnsemble]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for replica, ens in enumerate(ensembles):
        for walker in range(ens.n_walkers):
            for n in range(ens.horizon + 1):
                writer.writerow([replica, walker, ens.t0 + n, int(ens.positions[n, walker])])
    return buf.getvalue()


def write_trajectories(ensembles: list[PathEnsemble], path: Path) -> Path:
    return atomic_write(path, trajectories_csv(ensembles))


def _jsonable(value: Any) -> Any:
    """Numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple | np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, bool | np.bool_):
        return bool(value)
    if isinstance(value, int | np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        number = float(value)
        return number if math.isfinite(number) else str(number)
    if isinstance(value, Path):
        return str(value)
    return value


def write_summary(summary: dict[str, Any], path: Path) -> Path:
    content = json.dumps(_jsonable(summary), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    return atomic_write(path, content)


def load_summary(path: Path) -> dict[str, Any]:
    return json.loads(path.read_text(encoding="utf-8"))
