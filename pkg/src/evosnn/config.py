"""Configuration tables for every subsystem.

A configuration file is TOML with one table per section::

    [arena]
    n_food = 5

    [evolution]
    strategy = "crossover"

Every key has a default, so an empty file (or no file) is a valid config.
Keys may also be overridden from the environment with ``EVOSNN_<SECTION>__<KEY>``
(e.g. ``EVOSNN_ARENA__N_FOOD=10``) or from ``section.key=value`` strings.
"""
from __future__ import annotations

import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "EVOSNN_"

MUTATION = "mutation"
CROSSOVER = "crossover"
STRATEGIES = (MUTATION, CROSSOVER)


class ConfigError(ValueError):
    """Raised when a configuration is malformed; ``keys`` names the offenders."""

    def __init__(self, message: str, keys: list[str] | None = None):
        super().__init__(message)
        self.keys = keys or []


@dataclass(frozen=True)
class SnnConfig:
    n_neurons: int = 30
    v_th: float = 0.4
    beta: float = 0.01
    # literal "r > b" reading of the spontaneous-firing rule
    spontaneous_inverted: bool = False

    def validate(self) -> None:
        errs = []
        if self.n_neurons < 10:
            errs.append("snn.n_neurons")
        if not self.v_th > 0:
            errs.append("snn.v_th")
        if not 0 <= self.beta < 1:
            errs.append("snn.beta")
        if errs:
            raise ConfigError(f"invalid value for {', '.join(errs)}", errs)


@dataclass(frozen=True)
class ArenaConfig:
    width: float = 500.0
    height: float = 500.0
    n_bots: int = 10
    n_food: int = 5
    capture_dist_sq: float = 13.0
    # bot body area; only enters through capture_dist_sq
    bot_area: float = 40.0
    move_step: float = 1.0
    turn_step: float = 0.1
    radial_bands: tuple[float, float, float] = (30.0, 60.0, 100.0)
    food_speed_max: float = 1.0

    def validate(self) -> None:
        errs = []
        for name in ("width", "height", "capture_dist_sq", "bot_area", "move_step", "turn_step"):
            if not getattr(self, name) > 0:
                errs.append(f"arena.{name}")
        if self.n_bots < 1:
            errs.append("arena.n_bots")
        if self.n_food < 1:
            errs.append("arena.n_food")
        rb = self.radial_bands
        if len(rb) != 3 or not 0 < rb[0] < rb[1] < rb[2]:
            errs.append("arena.radial_bands")
        if self.food_speed_max < 0:
            errs.append("arena.food_speed_max")
        if errs:
            raise ConfigError(f"invalid value for {', '.join(errs)}", errs)


@dataclass(frozen=True)
class EvolutionConfig:
    strategy: str = MUTATION
    mu_mod: float = 0.05
    mu_visual: float = 0.008
    init_weight_scale: float = 0.5
    init_b: float = 0.01
    init_v: float = math.pi / 2
    min_visual_angle: float = 1e-6
    distinct_parents: bool = False

    def validate(self) -> None:
        errs = []
        if self.strategy not in STRATEGIES:
            errs.append("evolution.strategy")
        if self.mu_mod < 0:
            errs.append("evolution.mu_mod")
        if self.mu_visual < 0:
            errs.append("evolution.mu_visual")
        if self.init_weight_scale < 0:
            errs.append("evolution.init_weight_scale")
        if not 0 <= self.init_b <= 1:
            errs.append("evolution.init_b")
        if not 0 < self.min_visual_angle <= self.init_v <= 2 * math.pi:
            errs.append("evolution.init_v")
        if errs:
            raise ConfigError(f"invalid value for {', '.join(errs)}", errs)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1
    max_generations: int = 10_000
    window: int = 50
    stall_steps: int = 10_000_000
    # "generation": two-capture span measured at every generation;
    # "capture": disjoint capture pairs irrespective of strategy
    pairing: str = "generation"

    def validate(self) -> None:
        errs = []
        if self.seed < 0:
            errs.append("experiment.seed")
        if self.window < 1:
            errs.append("experiment.window")
        if self.max_generations < 0:
            errs.append("experiment.max_generations")
        if self.stall_steps < 1:
            errs.append("experiment.stall_steps")
        if self.pairing not in ("generation", "capture"):
            errs.append("experiment.pairing")
        if errs:
            raise ConfigError(f"invalid value for {', '.join(errs)}", errs)


@dataclass(frozen=True)
class AnalysisConfig:
    inflection_bin: float = 150.0
    convergence_bin: float = 100.0
    k_guess: float = 0.02
    bimodal_chi2_drop: float = 0.5
    bimodal_min_weight: float = 0.1
    bimodal_dip: float = 0.5
    min_converged: int = 10

    def validate(self) -> None:
        errs = [f"analysis.{n}" for n in ("inflection_bin", "convergence_bin") if not getattr(self, n) > 0]
        if errs:
            raise ConfigError(f"invalid value for {', '.join(errs)}", errs)


_SECTIONS = {
    "snn": SnnConfig,
    "arena": ArenaConfig,
    "evolution": EvolutionConfig,
    "experiment": ExperimentConfig,
    "analysis": AnalysisConfig,
}


@dataclass(frozen=True)
class Config:
    snn: SnnConfig = field(default_factory=SnnConfig)
    arena: ArenaConfig = field(default_factory=ArenaConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def validate(self) -> "Config":
        for name in _SECTIONS:
            getattr(self, name).validate()
        return self

    def replace(self, **sections: Mapping[str, Any]) -> "Config":
        """Return a copy with keys of the named sections replaced.

        >>> Config().replace(experiment={"seed": 7}).experiment.seed
        7
        """
        d = self.to_dict()
        for sec, vals in sections.items():
            d.setdefault(sec, {}).update(vals)
        return from_dict(d)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        out = {}
        for name in _SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    name = f"{section}.{key}"
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v for v in value.replace("[", "").replace("]", "").split(",") if v.strip()]
            return tuple(float(v) for v in value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot interpret {value!r} for {name}", [name]) from None


def from_dict(data: Mapping[str, Any]) -> Config:
    """Build and validate a :class:`Config`; unknown sections or keys are errors."""
    unknown = [s for s in data if s not in _SECTIONS]
    for sec, cls in _SECTIONS.items():
        vals = data.get(sec, {})
        if not isinstance(vals, Mapping):
            unknown.append(sec)
            continue
        names = {f.name for f in dataclasses.fields(cls)}
        unknown += [f"{sec}.{k}" for k in vals if k not in names]
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}", unknown)

    sections = {}
    for sec, cls in _SECTIONS.items():
        defaults = cls()
        vals = {k: _coerce(sec, k, v, getattr(defaults, k)) for k, v in data.get(sec, {}).items()}
        sections[sec] = cls(**vals)
    return Config(**sections).validate()


def parse_overrides(items: list[str]) -> dict[str, dict[str, Any]]:
    """Turn ``["arena.n_food=10", ...]`` into a nested dict of raw strings."""
    out: dict[str, dict[str, Any]] = {}
    for item in items:
        key, sep, value = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}", [item])
        out.setdefault(sec, {})[name] = value.strip()
    return out


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, dict[str, Any]]:
    environ = os.environ if environ is None else environ
    out: dict[str, dict[str, Any]] = {}
    for var, value in environ.items():
        if not var.startswith(ENV_PREFIX) or "__" not in var:
            continue
        sec, _, key = var[len(ENV_PREFIX):].lower().partition("__")
        out.setdefault(sec, {})[key] = value
    return out


def merge(*layers: Mapping[str, Mapping[str, Any]]) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for layer in layers:
        for sec, vals in layer.items():
            if not isinstance(vals, Mapping):
                out[sec] = vals
                continue
            out.setdefault(sec, {}).update(vals)
    return out


def load(path: str | Path | None = None, overrides: list[str] | None = None,
         environ: Mapping[str, str] | None = None) -> Config:
    """Load a config file, then apply environment and explicit overrides (in that order)."""
    data: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    return from_dict(merge(data, env_overrides(environ), parse_overrides(overrides or [])))


def dumps(cfg: Config) -> str:
    """Serialize to TOML text that :func:`load` reads back to an equal config."""
    lines = []
    for sec, vals in cfg.to_dict().items():
        lines.append(f"[{sec}]")
        for k, v in vals.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)
