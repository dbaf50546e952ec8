"""Configuration loading and validation."""

from __future__ import annotations

import hashlib
import json
import math
import platform
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

# Default config search paths (checked in order)
_DEFAULT_CONFIG_NAMES = [
    "gdnm.yaml",
    "gdnm.yml",
]

_SEED_LIMIT = 2**64
_PMF_TOLERANCE = 1e-12

EXPERIMENTS = (
    "increment",
    "tail",
    "density",
    "pair",
    "donsker",
    "boxexit",
    "eta",
    "crossing",
    "p00",
    "embed",
    "escape",
    "paths",
)

# Grid parameters per experiment; YAML overrides these key by key.
_EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "increment": {"window": None, "zmax": 12, "mc_steps": 0},
    "tail": {"k": 1, "t_grid": [64, 256, 1024, 4096]},
    "density": {"t_grid": [16, 64, 256], "guard": 1.0},
    "pair": {"d": 1.0, "t_grid": [1.0], "n": 100},
    "donsker": {"n": 100, "s_grid": [0.25, 0.5, 1.0]},
    "boxexit": {"u": 1.0, "t_grid": [0.4, 0.2, 0.1], "c_box": 2.0, "delta": 0.0625},
    "eta": {
        "delta": 0.0625,
        "t0": 0.0,
        "t": 1.0,
        "a": 0.0,
        "eps_grid": [0.4, 0.2, 0.1],
        "width": 1.0,
        "delta_grid": [0.125, 0.0625],
        "margin": 4.0,
    },
    "crossing": {"m_grid": list(range(1, 21)), "method": "exact"},
    "p00": {"m_grid": list(range(1, 21))},
    "embed": {
        "intervals": [[-1, 1], [-3, 1], [-2, 2], [-1, 4], [-5, 3]],
        "draws": 100_000,
        "accuracy": 1e-10,
        "separation": 30,
    },
    "escape": {"k": 1, "u": 1.0, "t": 1.0, "delta_grid": [0.125, 0.0625, 0.03125]},
    "paths": {"starts": [[0, 0], [1, 0], [2, 0]], "horizon": 200},
}

# Keys whose value must be a nonempty list
_GRID_KEYS = {
    "t_grid",
    "s_grid",
    "eps_grid",
    "delta_grid",
    "m_grid",
    "intervals",
    "starts",
}


def _default_config_dir() -> Path:
    """Return the platform-appropriate config directory."""
    if platform.system() == "Windows":
        base = Path.home() / "AppData" / "Local"
    else:
        base = Path.home() / ".config"
    return base / "gdnm"


def _expand_path(raw: str) -> Path:
    """Expand ~ and environment variables in a path string."""
    return Path(raw).expanduser().resolve()


def _to_snake(key: str) -> str:
    """Convert a camelCase YAML key to snake_case."""
    return re.sub(r"(?<!^)(?=[A-Z])", "_", key).lower()


class ConfigError(Exception):
    """Raised when the configuration is invalid."""


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: openness density, jump-rank law and master seed."""

    p: float = 0.5
    q: dict[int, float] = field(default_factory=lambda: {1: 1.0})
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.p, int | float) or not 0.0 < float(self.p) < 1.0:
            raise ConfigError(f"model.p: must lie strictly between 0 and 1, got {self.p!r}")

        if not isinstance(self.q, dict) or not self.q:
            raise ConfigError("model.q: must be a nonempty mapping of rank -> probability")

        clean: dict[int, float] = {}
        for rank, prob in self.q.items():
            try:
                rank_int = int(rank)
                prob_f = float(prob)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"model.q: invalid entry {rank!r}: {prob!r}") from exc
            if rank_int < 1:
                raise ConfigError(f"model.q: ranks must be positive integers, got {rank!r}")
            if prob_f < 0 or not math.isfinite(prob_f):
                raise ConfigError(f"model.q: probability for rank {rank_int} must be >= 0")
            if prob_f > 0:
                clean[rank_int] = prob_f

        total = math.fsum(clean.values())
        if abs(total - 1.0) > _PMF_TOLERANCE:
            raise ConfigError(f"model.q: probabilities sum to {total:g}, expected 1")

        if not isinstance(self.seed, int) or not 0 <= self.seed < _SEED_LIMIT:
            raise ConfigError(f"model.seed: must be an unsigned 64-bit integer, got {self.seed!r}")

        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "q", dict(sorted(clean.items())))

    @property
    def ranks(self) -> np.ndarray:
        """Support of q, sorted ascending."""
        return np.fromiter(self.q.keys(), dtype=np.int64)

    @property
    def rank_probs(self) -> np.ndarray:
        return np.fromiter(self.q.values(), dtype=np.float64)

    @property
    def max_rank(self) -> int:
        return max(self.q)

    @property
    def min_rank(self) -> int:
        return min(self.q)

    def with_seed(self, seed: int) -> ModelParams:
        return ModelParams(p=self.p, q=dict(self.q), seed=seed)

    def to_dict(self) -> dict[str, Any]:
        return {"p": self.p, "q": {str(k): v for k, v in self.q.items()}, "seed": self.seed}


@dataclass
class Settings:
    """Run-wide settings shared by every experiment."""

    replicas: int = 1000
    workers: int = 1
    out_dir: Path = field(default_factory=lambda: Path("results"))
    plot: bool = False
    confidence: float = 0.99
    chunk_size: int = 256

    def __post_init__(self) -> None:
        if self.replicas < 1:
            raise ConfigError(f"settings.replicas: must be >= 1, got {self.replicas}")
        if self.workers < 1:
            raise ConfigError(f"settings.workers: must be >= 1, got {self.workers}")
        if self.chunk_size < 1:
            raise ConfigError(f"settings.chunkSize: must be >= 1, got {self.chunk_size}")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError(f"settings.confidence: must lie in (0, 1), got {self.confidence}")


@dataclass
class AppConfig:
    """Application configuration loaded from YAML."""

    model: ModelParams = field(default_factory=ModelParams)
    settings: Settings = field(default_factory=Settings)

    # Raw per-experiment overrides, already converted to snake_case keys
    experiments: dict[str, dict[str, Any]] = field(default_factory=dict)

    # Path to the config file itself
    config_file_path: Path | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated view of the configuration for one experiment run."""

    name: str
    model: ModelParams
    params: dict[str, Any]
    replicas: int = 1000
    workers: int = 1
    out_dir: Path = field(default_factory=lambda: Path("results"))
    plot: bool = False
    confidence: float = 0.99
    chunk_size: int = 256

    def __post_init__(self) -> None:
        if self.name not in EXPERIMENTS:
            raise ConfigError(
                f"Unknown experiment '{self.name}'. Must be one of: {', '.join(EXPERIMENTS)}"
            )
        if self.replicas < 1:
            raise ConfigError(f"settings.replicas: must be >= 1, got {self.replicas}")
        for key, value in self.params.items():
            if key in _GRID_KEYS and (not isinstance(value, list) or not value):
                raise ConfigError(f"experiments.{self.name}.{key}: must be a nonempty list")

    def to_dict(self) -> dict[str, Any]:
        """Reproducibility-relevant content (worker count and paths excluded)."""
        return {
            "experiment": self.name,
            "model": self.model.to_dict(),
            "params": self.params,
            "replicas": self.replicas,
            "confidence": self.confidence,
            "chunkSize": self.chunk_size,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _find_config_file(config_path: Path | None = None) -> Path | None:
    """Locate the config file.

    Search order:
    1. Explicit path (if provided)
    2. Current working directory
    3. Platform config directory (~/.config/gdnm/ or AppData)
    4. Home directory
    """
    if config_path is not None:
        if config_path.is_file():
            return config_path
        raise ConfigError(f"Config file not found: {config_path}")

    search_dirs = [
        Path.cwd(),
        _default_config_dir(),
        Path.home(),
    ]

    for search_dir in search_dirs:
        for name in _DEFAULT_CONFIG_NAMES:
            candidate = search_dir / name
            if candidate.is_file():
                return candidate

    return None


def _parse_model(raw: dict[str, Any]) -> ModelParams:
    """Parse the model section of the config."""
    if not isinstance(raw, dict):
        raise ConfigError("'model' must be a mapping")

    unknown = set(raw) - {"p", "q", "seed"}
    if unknown:
        raise ConfigError(f"model: unknown keys {', '.join(sorted(map(str, unknown)))}")

    q = raw.get("q", {1: 1.0})
    if not isinstance(q, dict):
        raise ConfigError("model.q: must be a mapping of rank -> probability")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"model.seed: must be an integer, got {seed!r}")

    p = raw.get("p", 0.5)
    if isinstance(p, bool) or not isinstance(p, int | float):
        raise ConfigError(f"model.p: must be a number, got {p!r}")

    return ModelParams(p=p, q=q, seed=seed)


def _parse_settings(raw: dict[str, Any]) -> dict[str, Any]:
    """Parse the settings section of the config."""
    result: dict[str, Any] = {}

    int_keys = {
        "replicas": "replicas",
        "workers": "workers",
        "chunkSize": "chunk_size",
    }
    for yaml_key, attr_name in int_keys.items():
        if yaml_key in raw:
            try:
                result[attr_name] = int(raw[yaml_key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"settings.{yaml_key}: expected an integer") from exc

    if "outDir" in raw:
        result["out_dir"] = _expand_path(str(raw["outDir"]))

    if "plot" in raw:
        if not isinstance(raw["plot"], bool):
            raise ConfigError(f"settings.plot: expected true or false, got {raw['plot']!r}")
        result["plot"] = raw["plot"]

    if "confidence" in raw:
        try:
            result["confidence"] = float(raw["confidence"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("settings.confidence: expected a number") from exc

    return result


def _parse_experiments(raw: dict[str, Any]) -> dict[str, dict[str, Any]]:
    """Parse the experiments section of the config."""
    sections: dict[str, dict[str, Any]] = {}

    if not isinstance(raw, dict):
        raise ConfigError("'experiments' must be a mapping")

    for name, data in raw.items():
        if name not in EXPERIMENTS:
            raise ConfigError(
                f"Unknown experiment '{name}'. Must be one of: {', '.join(EXPERIMENTS)}"
            )
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(
                f"Experiment '{name}': expected a mapping, got {type(data).__name__}"
            )

        known = _EXPERIMENT_DEFAULTS[name]
        section: dict[str, Any] = {}
        for key, value in data.items():
            snake = _to_snake(str(key))
            if snake not in known:
                raise ConfigError(f"experiments.{name}: unknown key '{key}'")
            section[snake] = value
        sections[name] = section

    return sections


def load_config(config_path: Path | None = None) -> AppConfig:
    """Load application config from YAML file.

    Returns sensible defaults if no config file is found.
    """
    found_path = _find_config_file(config_path)

    if found_path is None:
        return AppConfig()

    try:
        text = found_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config file: {exc}") from exc

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"Invalid YAML in config file: {exc}") from exc

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("Config file must contain a YAML mapping at the top level")

    model = _parse_model(data.get("model", {}))

    settings_raw = data.get("settings", {})
    if not isinstance(settings_raw, dict):
        raise ConfigError("'settings' must be a mapping")
    settings = Settings(**_parse_settings(settings_raw))

    experiments = _parse_experiments(data.get("experiments", {}) or {})

    return AppConfig(
        model=model,
        settings=settings,
        experiments=experiments,
        config_file_path=found_path,
    )


def experiment_config(
    config: AppConfig,
    name: str,
    *,
    seed: int | None = None,
    workers: int | None = None,
    replicas: int | None = None,
    out_dir: Path | None = None,
    plot: bool | None = None,
) -> ExperimentConfig:
    """Build the validated config for one experiment, applying CLI overrides."""
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"Unknown experiment '{name}'. Must be one of: {', '.join(EXPERIMENTS)}"
        )

    params = dict(_EXPERIMENT_DEFAULTS[name])
    params.update(config.experiments.get(name, {}))

    model = config.model if seed is None else config.model.with_seed(seed)
    settings = config.settings

    return ExperimentConfig(
        name=name,
        model=model,
        params=params,
        replicas=replicas if replicas is not None else settings.replicas,
        workers=workers if workers is not None else settings.workers,
        out_dir=out_dir if out_dir is not None else settings.out_dir,
        plot=settings.plot if plot is None else plot,
        confidence=settings.confidence,
        chunk_size=settings.chunk_size,
    )
