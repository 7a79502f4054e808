"""Traffic window schema, CSV IO, aggregation, scaling, splitting and a synthetic generator.

A window covers minutes -5..+5 around a case time (11 one-minute steps) at an
upstream and a downstream loop detector, plus four static context values.
Internally a :class:`Dataset` keeps windows as flat 70-value rows in the same
column order as the CSV file.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_STEPS = 11
SERIES = ("speed_up", "speed_down", "occ_up", "occ_down", "vol_up", "vol_down")
CONTEXT = ("weather", "weekday", "am_peak", "pm_peak")
TRAFFIC_COLUMNS = [f"{s}_{t}" for s in SERIES for t in range(N_STEPS)]
FEATURE_COLUMNS = TRAFFIC_COLUMNS + list(CONTEXT)
CSV_COLUMNS = FEATURE_COLUMNS + ["label"]
N_FEATURES = len(FEATURE_COLUMNS)  # 70
STEP_DIM = len(SERIES) + len(CONTEXT)  # 10 values per timestep after scaling
RAW_COLUMNS = ["timestamp_s", "speed", "occupancy", "volume_20s"]


class SchemaError(ValueError):
    """Input does not match the window schema."""


@dataclass(frozen=True)
class TrafficWindow:
    speed_up: tuple[float, ...]
    speed_down: tuple[float, ...]
    occ_up: tuple[float, ...]
    occ_down: tuple[float, ...]
    vol_up: tuple[float, ...]
    vol_down: tuple[float, ...]
    weather: int
    weekday: int
    am_peak: int
    pm_peak: int
    label: int | None = None

    def __post_init__(self):
        for name in SERIES:
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != N_STEPS:
                raise SchemaError(f"{name}: expected {N_STEPS} values, got {len(values)}")
            if not all(math.isfinite(v) for v in values):
                raise SchemaError(f"{name}: values must be finite")
            object.__setattr__(self, name, values)
        for name in ("speed_up", "speed_down", "vol_up", "vol_down"):
            if min(getattr(self, name)) < 0:
                raise SchemaError(f"{name}: values must be non-negative")
        for name in ("occ_up", "occ_down"):
            vals = getattr(self, name)
            if min(vals) < 0 or max(vals) > 100:
                raise SchemaError(f"{name}: occupancy must lie in [0, 100]")
        if self.weather not in (1, 2, 3, 4):
            raise SchemaError(f"weather must be one of 1..4, got {self.weather!r}")
        for name in ("weekday", "am_peak", "pm_peak"):
            if getattr(self, name) not in (0, 1):
                raise SchemaError(f"{name} must be 0 or 1, got {getattr(self, name)!r}")
        if self.am_peak and self.pm_peak:
            raise SchemaError("am_peak and pm_peak cannot both be 1")
        if (self.am_peak or self.pm_peak) and not self.weekday:
            raise SchemaError("peak-hour flags require weekday == 1")
        if self.label not in (None, 0, 1):
            raise SchemaError(f"label must be 0 or 1, got {self.label!r}")

    def to_row(self) -> np.ndarray:
        traffic = [v for name in SERIES for v in getattr(self, name)]
        return np.array(traffic + [self.weather, self.weekday, self.am_peak, self.pm_peak], dtype=np.float64)

    @classmethod
    def from_row(cls, row: Sequence[float], label: int | None = None) -> "TrafficWindow":
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (N_FEATURES,):
            raise SchemaError(f"expected {N_FEATURES} feature values, got {row.shape}")
        series = {name: tuple(row[i * N_STEPS:(i + 1) * N_STEPS]) for i, name in enumerate(SERIES)}
        ctx = row[len(TRAFFIC_COLUMNS):]
        for name, v in zip(CONTEXT, ctx):
            if v != int(v):
                raise SchemaError(f"{name} must be an integer, got {v}")
        return cls(**series, weather=int(ctx[0]), weekday=int(ctx[1]), am_peak=int(ctx[2]),
                   pm_peak=int(ctx[3]), label=label)


@dataclass(frozen=True)
class Dataset:
    """Rows of flat window features and their labels.

    ``features`` may hold raw or scaled values; SMOTE output is not required
    to satisfy :class:`TrafficWindow` invariants (flags become fractional).
    ``labels`` is None for unlabelled windows.
    """

    features: np.ndarray
    labels: np.ndarray | None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != N_FEATURES:
            raise SchemaError(f"features must have shape (n, {N_FEATURES}), got {f.shape}")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)
        if self.labels is not None:
            y = np.asarray(self.labels).astype(np.int64)
            if y.shape != (f.shape[0],):
                raise SchemaError(f"labels must have shape ({f.shape[0]},), got {y.shape}")
            if not np.isin(y, (0, 1)).all():
                raise SchemaError("labels must be 0 or 1")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]

    @classmethod
    def from_windows(cls, windows: Iterable[TrafficWindow]) -> "Dataset":
        windows = list(windows)
        rows = np.array([w.to_row() for w in windows]).reshape(len(windows), N_FEATURES)
        labels = [w.label for w in windows]
        if all(lab is None for lab in labels):
            return cls(rows, None)
        if any(lab is None for lab in labels):
            raise SchemaError("either every window carries a label or none does")
        return cls(rows, np.array(labels))

    def windows(self) -> list[TrafficWindow]:
        labels = self.labels if self.labels is not None else [None] * len(self)
        return [TrafficWindow.from_row(r, None if lab is None else int(lab))
                for r, lab in zip(self.features, labels)]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], None if self.labels is None else self.labels[idx])

    def class_counts(self) -> tuple[int, int]:
        """(accident, non-accident) counts."""
        if self.labels is None:
            raise SchemaError("dataset has no labels")
        n_pos = int(self.labels.sum())
        return n_pos, len(self) - n_pos


def to_sequences(rows: np.ndarray) -> np.ndarray:
    """Reshape flat rows (n, 70) into model input of shape (n, 11, 10).

    Each timestep carries its 6 traffic values followed by the 4 context values.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    traffic = rows[:, :len(TRAFFIC_COLUMNS)].reshape(n, len(SERIES), N_STEPS).transpose(0, 2, 1)
    ctx = np.repeat(rows[:, None, len(TRAFFIC_COLUMNS):], N_STEPS, axis=1)
    return np.concatenate([traffic, ctx], axis=2)


# --------------------------------------------------------------------------
# 20-second readings

@dataclass(frozen=True)
class RawDetectorReading:
    timestamp: float
    speed: float
    occupancy: float
    volume: float


def aggregate_to_minutes(readings: Sequence[RawDetectorReading]) -> list[tuple[float, float, float]]:
    """Collapse 20 s readings into (mean speed, mean occupancy, summed volume) per minute."""
    readings = sorted(readings, key=lambda r: r.timestamp)
    if not readings:
        raise ValueError("no readings to aggregate")
    for r in readings:
        if r.timestamp % 20 != 0:
            raise ValueError(f"timestamp {r.timestamp} is not on the 20-second grid")
        if min(r.speed, r.occupancy, r.volume) < 0:
            raise ValueError(f"negative value in reading at t={r.timestamp}")
    if len(readings) % 3:
        raise ValueError(f"{len(readings)} readings do not fill whole minutes (need multiples of 3)")
    out = []
    for i in range(0, len(readings), 3):
        chunk = readings[i:i + 3]
        expected = [chunk[0].timestamp + 20 * k for k in range(3)]
        if [r.timestamp for r in chunk] != expected:
            raise ValueError(
                f"incomplete minute starting at t={chunk[0].timestamp}: "
                f"got timestamps {[r.timestamp for r in chunk]}"
            )
        out.append((
            sum(r.speed for r in chunk) / 3.0,
            sum(r.occupancy for r in chunk) / 3.0,
            float(sum(r.volume for r in chunk)),
        ))
    return out


def load_raw_csv(path) -> list[RawDetectorReading]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != RAW_COLUMNS:
            raise SchemaError(f"raw detector header mismatch: expected {RAW_COLUMNS}, found {header}")
        readings = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RAW_COLUMNS):
                raise SchemaError(f"row {lineno}: expected {len(RAW_COLUMNS)} fields, got {len(row)}")
            try:
                readings.append(RawDetectorReading(*(float(v) for v in row)))
            except ValueError as exc:
                raise SchemaError(f"row {lineno}: {exc}") from None
    return readings


# --------------------------------------------------------------------------
# scaling

@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=np.float64)
        hi = np.asarray(self.maximum, dtype=np.float64)
        if lo.shape != (N_FEATURES,) or hi.shape != (N_FEATURES,):
            raise SchemaError(f"scaler needs {N_FEATURES} coordinates")
        if np.any(hi < lo):
            raise ValueError("scaler maximum below minimum")
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @property
    def constant(self) -> np.ndarray:
        return self.maximum == self.minimum

    def transform(self, rows: np.ndarray) -> np.ndarray:
        """Min-max scale flat rows; constant coordinates map to 0, nothing is clipped."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != N_FEATURES:
            raise SchemaError(f"expected {N_FEATURES} features, got {rows.shape[-1]}")
        span = np.where(self.constant, 1.0, self.maximum - self.minimum)
        return np.where(self.constant, 0.0, (rows - self.minimum) / span)


def fit_scaler(train: Dataset) -> ScalerParams:
    if len(train) == 0:
        raise ValueError("cannot fit a scaler on an empty dataset")
    return ScalerParams(train.features.min(axis=0), train.features.max(axis=0))


def apply_scaler(s: ScalerParams, w: TrafficWindow) -> np.ndarray:
    """Scaled 11 x 10 input sequence for one window."""
    return to_sequences(s.transform(w.to_row()[None, :]))[0]


def scale_dataset(s: ScalerParams, ds: Dataset) -> Dataset:
    return Dataset(s.transform(ds.features), ds.labels)


# --------------------------------------------------------------------------
# splitting

def split(ds: Dataset, train_fraction: float = 0.65, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random partition into train and test row indices.

    The train part has ``round(n * train_fraction)`` rows. Both index arrays
    are returned sorted.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(ds)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_train = int(round(n * train_fraction))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# --------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the linear-gap shockwave generator.

    ``divergence_rate`` is the growth of the downstream-minus-upstream speed
    gap per minute after the accident (mi/hr per minute). Occupancy and
    volume react proportionally, scaled by their mean relative to speed.
    ``noise_scale`` is the per-minute speed noise (mi/hr); occupancy and
    volume noise use the same relative scale.
    """

    n_accident: int = 241
    n_nonaccident: int = 6038
    speed_mean: float = 50.6
    occupancy_mean: float = 15.1
    volume_mean: float = 18.6
    baseline_spread: float = 0.15
    divergence_rate: float = 1.5
    noise_scale: float = 4.0
    weather_probs: tuple[float, ...] = (0.87, 0.09, 0.03, 0.01)
    weekday_rate: float = 0.71
    am_peak_rate: float = 0.12
    pm_peak_rate: float = 0.13
    seed: int = 0

    def validate(self) -> None:
        if self.n_accident <= 0 or self.n_nonaccident <= 0:
            raise ValueError("generator needs at least one accident and one non-accident window")
        if self.noise_scale < 0 or self.baseline_spread < 0 or self.divergence_rate < 0:
            raise ValueError("noise_scale, baseline_spread and divergence_rate must be non-negative")
        if min(self.speed_mean, self.occupancy_mean, self.volume_mean) <= 0:
            raise ValueError("baseline means must be positive")
        if len(self.weather_probs) != 4 or abs(sum(self.weather_probs) - 1.0) > 1e-9:
            raise ValueError("weather_probs must be 4 probabilities summing to 1")
        if self.am_peak_rate + self.pm_peak_rate > self.weekday_rate:
            raise ValueError("peak-hour rates cannot exceed the weekday rate")


def generate_synthetic(cfg: GeneratorConfig = GeneratorConfig()) -> Dataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_accident + cfg.n_nonaccident
    labels = np.zeros(n, dtype=np.int64)
    labels[:cfg.n_accident] = 1
    labels = labels[rng.permutation(n)]

    means = np.array([cfg.speed_mean, cfg.occupancy_mean, cfg.volume_mean])
    rel_noise = cfg.noise_scale / cfg.speed_mean
    base = means * (1.0 + cfg.baseline_spread * rng.standard_normal((n, 3)))
    base = np.clip(base, 0.2 * means, 1.8 * means)

    # (n, quantity, location, minute)
    series = np.repeat(base[:, :, None, None], 2, axis=2).repeat(N_STEPS, axis=3)
    series = series + rel_noise * means[None, :, None, None] * rng.standard_normal((n, 3, 2, N_STEPS))

    minutes_after = np.clip(np.arange(N_STEPS) - 5, 0, None).astype(np.float64)
    gap = cfg.divergence_rate * minutes_after * labels[:, None]  # (n, minute)
    up, down = 0, 1
    speed, occ, vol = 0, 1, 2
    series[:, speed, up] -= gap / 2.0
    series[:, speed, down] += gap / 2.0
    series[:, occ, up] += gap * cfg.occupancy_mean / cfg.speed_mean
    series[:, vol, down] -= gap * cfg.volume_mean / cfg.speed_mean / 2.0

    series[:, speed] = np.clip(series[:, speed], 0.0, None)
    series[:, occ] = np.clip(series[:, occ], 0.0, 100.0)
    series[:, vol] = np.clip(series[:, vol], 0.0, None)

    weather = rng.choice(np.arange(1, 5), size=n, p=np.asarray(cfg.weather_probs))
    weekday = (rng.random(n) < cfg.weekday_rate).astype(np.int64)
    draw = rng.random(n)
    am = weekday * (draw < cfg.am_peak_rate / cfg.weekday_rate)
    pm = weekday * (1 - am) * (draw < (cfg.am_peak_rate + cfg.pm_peak_rate) / cfg.weekday_rate)

    # CSV order: speed_up, speed_down, occ_up, occ_down, vol_up, vol_down
    traffic = series.reshape(n, 6 * N_STEPS)
    rows = np.column_stack([traffic, weather, weekday, am, pm])
    return Dataset(rows, labels)


# --------------------------------------------------------------------------
# CSV

def _format(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def dataset_to_csv_text(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS if ds.labels is not None else FEATURE_COLUMNS)
    for i, row in enumerate(ds.features):
        cells = [_format(v) for v in row]
        if ds.labels is not None:
            cells.append(str(int(ds.labels[i])))
        writer.writerow(cells)
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_csv(ds: Dataset, path) -> None:
    for w_row in range(len(ds)):
        # invariant check on the way out; synthetic-oversampled data is not a valid window file
        TrafficWindow.from_row(ds.features[w_row])
    atomic_write_text(path, dataset_to_csv_text(ds))


def _column_block(col: str) -> str:
    return col.rsplit("_", 1)[0] if col in TRAFFIC_COLUMNS else col


def load_csv(path, require_label: bool = True) -> Dataset:
    """Read a window CSV. With ``require_label=False`` the label column is optional."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        has_label = header == CSV_COLUMNS
        if not has_label and (require_label or header != FEATURE_COLUMNS):
            expected = CSV_COLUMNS if require_label else f"{FEATURE_COLUMNS} [+ label]"
            missing = [c for c in CSV_COLUMNS if c not in header]
            extra = [c for c in header if c not in CSV_COLUMNS]
            blocks = sorted({_column_block(c) for c in missing + extra})
            raise SchemaError(
                f"header mismatch in {path} (column blocks {blocks}): expected {expected}, "
                f"found {header}; missing {missing}, unexpected {extra}"
            )
        width = len(header)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise SchemaError(_short_row_message(lineno, row, header))
            values = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise SchemaError(f"row {lineno}, column {col}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise SchemaError(f"row {lineno}, column {col}: value must be finite")
                values.append(v)
            label = None
            if has_label:
                label = values.pop()
                if label not in (0.0, 1.0):
                    raise SchemaError(f"row {lineno}, column label: must be 0 or 1, got {label}")
                label = int(label)
            try:
                w = TrafficWindow.from_row(values, label)
            except SchemaError as exc:
                raise SchemaError(f"row {lineno}: {exc}") from None
            rows.append(w.to_row())
            labels.append(label)
    if not rows:
        raise SchemaError(f"{path} contains no data rows")
    return Dataset(np.array(rows), np.array(labels) if has_label else None)


def _short_row_message(lineno: int, row: list[str], header: list[str]) -> str:
    return f"row {lineno}: expected {len(header)} fields, got {len(row)}"


def feature_means(ds: Dataset) -> dict[str, float]:
    """Per-variable means in the style of the explanatory-variable table."""
    out = {}
    for i, name in enumerate(SERIES):
        out[name] = float(ds.features[:, i * N_STEPS:(i + 1) * N_STEPS].mean())
    for j, name in enumerate(CONTEXT):
        out[name] = float(ds.features[:, len(TRAFFIC_COLUMNS) + j].mean())
    return out
