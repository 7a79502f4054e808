"""Run configuration: a flat ``section.key = value`` text file.

Lines starting with ``#`` are comments. Lists are comma separated. Every key
has a default; the model and epoch defaults follow the published LSTM/GRU
architectures and depend on ``model.cell``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dataio import STEP_DIM, GeneratorConfig
from .evaluation import default_grid
from .numerics import Activation
from .recurrent import CellKind, NetworkSpec
from .sampling import SmoteConfig
from .training import TrainConfig

DEFAULT_WIDTHS = {
    CellKind.LSTM: (30, 50, 60, 80, 50, 40, 30, 20, 10),
    CellKind.GRU: (50, 70, 90, 110, 100, 80, 60, 40, 20),
}
DEFAULT_EPOCHS = {CellKind.LSTM: 2500, CellKind.GRU: 4000}
DEFAULT_BATCH = 2000


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    cell_kind: CellKind = CellKind.LSTM
    layer_widths: tuple[int, ...] = DEFAULT_WIDTHS[CellKind.LSTM]
    activation: Activation = Activation.TANH
    train_fraction: float = 0.65
    split_seed: int = 0
    generator: GeneratorConfig = GeneratorConfig()
    smote: SmoteConfig = SmoteConfig()
    train: TrainConfig = TrainConfig(epochs=DEFAULT_EPOCHS[CellKind.LSTM], batch_size=DEFAULT_BATCH)

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(self.cell_kind, self.layer_widths, STEP_DIM, self.activation)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            split_seed=seed,
            generator=replace(self.generator, seed=seed),
            smote=replace(self.smote, seed=seed),
            train=replace(self.train, seed=seed),
        )


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",") if part.strip()]
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw.strip("\"'")


def parse_config_text(text: str) -> dict[str, object]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} needs a section prefix such as 'train.'")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(value)
    return out


def _as_tuple(v, cast):
    return tuple(cast(x) for x in (v if isinstance(v, list) else [v]))


def _section(prefix: str, cls, values: dict, base=None, tuple_fields=()):
    names = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key in [k for k in values if k.startswith(prefix + ".")]:
        name = key[len(prefix) + 1:]
        if name not in names:
            raise ConfigError(f"unknown config key {key!r}; known: {sorted(prefix + '.' + n for n in names)}")
        v = values.pop(key)
        kwargs[name] = _as_tuple(v, float) if name in tuple_fields else v
    try:
        return replace(base, **kwargs) if base is not None else cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{prefix}] settings: {exc}") from None


def run_config_from_mapping(mapping: dict[str, object]) -> RunConfig:
    values = dict(mapping)
    try:
        cell = CellKind(str(values.pop("model.cell", "lstm")).lower())
        activation = Activation(str(values.pop("model.activation", "tanh")).lower())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    widths = _as_tuple(values.pop("model.widths", list(DEFAULT_WIDTHS[cell])), int)
    if not widths or min(widths) <= 0:
        raise ConfigError("model.widths must be positive integers")

    train_fraction = float(values.pop("split.train_fraction", 0.65))
    if not 0 < train_fraction < 1:
        raise ConfigError("split.train_fraction must lie in (0, 1)")
    split_seed = int(values.pop("split.seed", 0))

    start = float(values.pop("threshold.grid_start", 0.01))
    stop = float(values.pop("threshold.grid_stop", 0.99))
    step = float(values.pop("threshold.grid_step", 0.01))
    if step <= 0:
        raise ConfigError("threshold.grid_step must be positive")
    n_grid = int(math.floor((stop - start) / step + 1e-9)) + 1  # never step past grid_stop
    if (start, stop, step) == (0.01, 0.99, 0.01):
        grid = tuple(default_grid())
    else:
        grid = tuple(round(start + i * step, 10) for i in range(n_grid))

    generator = _section("generator", GeneratorConfig, values, tuple_fields=("weather_probs",))
    try:
        generator.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid [generator] settings: {exc}") from None
    smote = _section("smote", SmoteConfig, values)
    try:
        train_base = TrainConfig(epochs=DEFAULT_EPOCHS[cell], batch_size=DEFAULT_BATCH, threshold_grid=grid)
    except ValueError as exc:
        raise ConfigError(f"invalid [threshold] settings: {exc}") from None
    train = _section("train", TrainConfig, values, base=train_base)

    if values:
        raise ConfigError(f"unknown config keys: {sorted(values)}")
    return RunConfig(cell, widths, activation, train_fraction, split_seed, generator, smote, train)


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return run_config_from_mapping(parse_config_text(text))
