"""Experiment configuration: a flat TOML table, validated before any work starts."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bregman import Loss
from .densities import Family
from .errors import ConfigError, NceLabError

COMMANDS = ("mse", "zbench", "optimize-noise", "optimize-nu", "validate", "landscape", "preset")
PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7")


@dataclass
class ExperimentConfig:
    command: str
    preset: Optional[str] = None
    model: str = "gauss_mean"
    theta: Optional[float] = None
    normalized: bool = True
    noise: str = "data"
    data: str = "normal:0,1"
    z_star: float = 1.0
    nu: object = 1.0  # a number, or "joint" for optimize-noise
    nu_grid: Optional[list] = None
    loss: object = "js"  # a name or a list of names
    T: float = 1000.0
    objective: str = "parametric"
    mode: str = "parametric"
    param_lo: Optional[float] = None
    param_hi: Optional[float] = None
    param_n: Optional[int] = None
    grid_lo: Optional[float] = None
    grid_hi: Optional[float] = None
    grid_n: Optional[int] = None
    max_iter: int = 100
    projection: str = "clip"
    seed: int = 0
    reps: int = 500
    threads: int = 1
    output: str = "out"
    gnuplot: bool = False
    plot: bool = False

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the configuration."""
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}
_NUMBER = (int, float)


def _expect(name, value, kinds, what):
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"field '{name}' must be {what}, got {value!r}")
    if not isinstance(value, kinds):
        raise ConfigError(f"field '{name}' must be {what}, got {value!r}")


def validate(raw: dict) -> ExperimentConfig:
    """Check keys and types and build an :class:`ExperimentConfig`."""
    unknown = sorted(set(raw) - FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    if "command" not in raw or raw["command"] in (None, ""):
        raise ConfigError("missing required field 'command'")
    cfg = ExperimentConfig(**raw)
    if cfg.command not in COMMANDS:
        raise ConfigError(f"field 'command' must be one of {', '.join(COMMANDS)}, got {cfg.command!r}")
    if cfg.command == "preset":
        if cfg.preset is None:
            raise ConfigError("missing required field 'preset' for command 'preset'")
        if cfg.preset not in PRESETS:
            raise ConfigError(f"field 'preset' must be one of {', '.join(PRESETS)}, got {cfg.preset!r}")
    try:
        Family.parse(cfg.model)
    except NceLabError:
        raise ConfigError(f"field 'model' names an unknown family: {cfg.model!r}") from None
    losses = cfg.loss if isinstance(cfg.loss, list) else str(cfg.loss).split(",")
    for name in losses:
        try:
            Loss.parse(name)
        except NceLabError:
            raise ConfigError(f"field 'loss' names an unknown loss: {name!r}") from None
    if cfg.nu != "joint":
        _expect("nu", cfg.nu, _NUMBER, "a positive number or 'joint'")
        if not cfg.nu > 0:
            raise ConfigError("field 'nu' must be positive")
    if cfg.nu_grid is not None:
        _expect("nu_grid", cfg.nu_grid, (list,), "a list of positive numbers")
        if not cfg.nu_grid or not all(isinstance(v, _NUMBER) and not isinstance(v, bool) and v > 0
                                      for v in cfg.nu_grid):
            raise ConfigError("field 'nu_grid' must be a nonempty list of positive numbers")
    for name in ("T", "z_star"):
        _expect(name, getattr(cfg, name), _NUMBER, "a positive number")
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"field '{name}' must be positive")
    for name in ("theta", "param_lo", "param_hi", "grid_lo", "grid_hi"):
        if getattr(cfg, name) is not None:
            _expect(name, getattr(cfg, name), _NUMBER, "a number")
    for name in ("seed", "reps", "threads", "max_iter"):
        _expect(name, getattr(cfg, name), (int,), "an integer")
    for name in ("param_n", "grid_n"):
        if getattr(cfg, name) is not None:
            _expect(name, getattr(cfg, name), (int,), "an integer")
            if getattr(cfg, name) < 2:
                raise ConfigError(f"field '{name}' must be at least 2")
    if cfg.seed < 0 or cfg.reps < 1 or cfg.threads < 1 or cfg.max_iter < 1:
        raise ConfigError("seed must be >= 0; reps, threads and max_iter must be >= 1")
    for name in ("normalized", "gnuplot", "plot"):
        _expect(name, getattr(cfg, name), (bool,), "true or false")
    if cfg.objective not in ("parametric", "nonparametric", "mse", "kl"):
        raise ConfigError(f"field 'objective' must be parametric/mse or nonparametric/kl, got {cfg.objective!r}")
    if cfg.mode not in ("parametric", "histogram"):
        raise ConfigError(f"field 'mode' must be parametric or histogram, got {cfg.mode!r}")
    if cfg.projection not in ("clip", "softmax"):
        raise ConfigError(f"field 'projection' must be clip or softmax, got {cfg.projection!r}")
    for name in ("noise", "data", "output"):
        _expect(name, getattr(cfg, name), (str,), "a string")
    return cfg


def load_file(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def merge(file_values: dict, overrides: dict) -> dict:
    """File values overridden by every flag that was actually given."""
    out = dict(file_values)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out
