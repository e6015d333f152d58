"""Experiment configuration: dataclasses plus a strict key=value loader.

A config file has optional ``[model]``, ``[experiment]`` and ``[physics]``
sections. Keys before any section are looked up in all three (they are
disjoint). Run manifests add a free-form ``[run]`` section, which the loader
returns separately. Unknown keys and malformed values raise
:class:`ConfigError` naming the key and line.

Defaults (desk scale):

[experiment]
  name=run              label for run directories and plot legends
  domain=maze2          maze1 | maze2 | pool
  seeds=0,1,2
  steps=10000           supervised updates per run
  batch_size=32
  consistency_ratio=0   consistency updates after each supervised one (0, 1, 9)
  eval_every=500
  eval_size=512
  norm_samples=2000     calibration samples for target normalisation
  lr=0.001
  maze_size=8
  n_walls=0             0 = calibrated count for maze_size
  pool_size=16          rendered input side length
  pool_episodes=4000    size of the fixed training episode pool
  checkpoint_every=0    0 = only at the end
  record_wall_time=false
  decision_positions=20
  decision_angles=16
  decision_speeds=4

[model]   every PredictronConfig field (K, channels, hidden, use_rg, ...)
[physics] every pool Physics field (friction, restitution, radius, ...)
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .envs.pool import Physics
from .model import PredictronConfig

DOMAINS = ("maze1", "maze2", "pool")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    name: str = "run"
    domain: str = "maze2"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    steps: int = 10000
    batch_size: int = 32
    consistency_ratio: int = 0
    eval_every: int = 500
    eval_size: int = 512
    norm_samples: int = 2000
    lr: float = 1e-3
    maze_size: int = 8
    n_walls: int = 0
    pool_size: int = 16
    pool_episodes: int = 4000
    checkpoint_every: int = 0
    record_wall_time: bool = False
    decision_positions: int = 20
    decision_angles: int = 16
    decision_speeds: int = 4
    model: PredictronConfig = field(default_factory=PredictronConfig)
    physics: Physics = field(default_factory=Physics)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.steps <= 0:
            raise ConfigError("steps must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (batch norm)")
        if self.consistency_ratio < 0:
            raise ConfigError("consistency_ratio must be >= 0")
        if self.eval_every <= 0:
            raise ConfigError("eval_every must be positive")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def with_model(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, model=dataclasses.replace(self.model, **changes))

    def sections(self) -> dict[str, dict]:
        top = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
               if f.name not in ("model", "physics")}
        return {"experiment": top, "model": self.model.to_dict(), "physics": self.physics.to_dict()}


_SECTION_TYPES = {"experiment": ExperimentSpec, "model": PredictronConfig, "physics": Physics}


def _field_types(cls) -> dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(cls) if f.name not in ("model", "physics")}


def _parse(kind: str, text: str):
    if kind == "bool":
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "list[int]":
        return [int(x) for x in text.split(",") if x.strip()]
    if kind == "str":
        return text
    raise ValueError(f"unsupported field type {kind}")


def parse_config_text(text: str, source: str = "<config>") -> tuple[ExperimentSpec, dict[str, str]]:
    """Returns the spec and the raw ``[run]`` section (empty for plain configs)."""
    types = {name: _field_types(cls) for name, cls in _SECTION_TYPES.items()}
    values: dict[str, dict] = {name: {} for name in _SECTION_TYPES}
    run: dict[str, str] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw!r}")
            section = line[1:-1].strip()
            if section not in _SECTION_TYPES and section != "run":
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if section == "run":
            run[key] = val
            continue
        if section is None:
            owners = [s for s in types if key in types[s]]
            if not owners:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            target = owners[0]
        else:
            target = section
            if key not in types[target]:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{section}]")
        try:
            values[target][key] = _parse(types[target][key], val)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {e}") from None
    try:
        model = PredictronConfig(**values["model"])
        physics = Physics(**values["physics"])
        spec = ExperimentSpec(**values["experiment"], model=model, physics=physics)
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from None
    return spec, run


def load_config(path) -> ExperimentSpec:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), str(p))[0]


def load_config_with_run(path) -> tuple[ExperimentSpec, dict[str, str]]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), str(p))


def dump_config(spec: ExperimentSpec, run: dict | None = None) -> str:
    from .io import format_value

    lines = []
    for name, entries in spec.sections().items():
        lines.append(f"[{name}]")
        lines.extend(f"{k}={format_value(v)}" for k, v in entries.items())
        lines.append("")
    if run:
        lines.append("[run]")
        lines.extend(f"{k}={format_value(v)}" for k, v in run.items())
        lines.append("")
    return "\n".join(lines)
