"""Cross-entropy loss, mini-batch Adam training, prediction and classification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataio import N_FEATURES, Dataset, ScalerParams, TrafficWindow, apply_scaler, to_sequences
from .evaluation import classify_scores, default_grid, threshold_sweep
from .numerics import AdamState, adam_step
from .recurrent import (
    NetworkParams,
    NetworkSpec,
    batch_gradients,
    flatten,
    forward_batch,
    forward_sequence,
    init_params,
    unflatten,
)

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


class TrainingError(RuntimeError):
    pass


def binary_crossentropy(p, y):
    """-[y ln p + (1-y) ln(1-p)] with p clamped to [1e-12, 1-1e-12]. Works elementwise."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2500
    batch_size: int = 2000
    learning_rate: float = 0.001
    clip_norm: float = 5.0
    seed: int = 0
    threshold_grid: tuple[float, ...] = tuple(default_grid())
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        grid = tuple(float(t) for t in self.threshold_grid)
        if not grid or any(not 0 < t < 1 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("threshold_grid must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "threshold_grid", grid)
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")


def identity_scaler() -> ScalerParams:
    return ScalerParams(np.zeros(N_FEATURES), np.ones(N_FEATURES))


@dataclass(frozen=True)
class TrainedModel:
    spec: NetworkSpec
    params: NetworkParams
    scaler: ScalerParams
    threshold: float
    training_log: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        self.params.check(self.spec)


def clip_by_global_norm(g: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.sqrt(np.dot(g, g)))
    if norm > max_norm:
        return g * (max_norm / norm)
    return g


def train(
    train_set: Dataset,
    spec: NetworkSpec,
    cfg: TrainConfig,
    scaler: ScalerParams | None = None,
) -> TrainedModel:
    """Fit a network on scaled, balanced data and choose its decision threshold.

    The data is shuffled once with ``cfg.seed``; the last ``validation_fraction``
    of that order is held out for the threshold sweep and never used for
    gradient steps. ``scaler`` is stored on the model for later prediction.
    """
    n = len(train_set)
    if n == 0:
        raise TrainingError("training set is empty")
    if train_set.labels is None:
        raise TrainingError("training set has no labels")
    if cfg.batch_size > n:
        raise TrainingError(f"batch_size {cfg.batch_size} exceeds training set size {n}")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, rng)
    xs = to_sequences(train_set.features)
    ys = train_set.labels.astype(np.float64)

    order = rng.permutation(n)
    n_val = int(n * cfg.validation_fraction)
    fit_idx, val_idx = order[:n - n_val], order[n - n_val:]
    if len(val_idx) == 0:
        val_idx = fit_idx

    flat = flatten(params)
    state = AdamState.fresh(flat.size, learning_rate=cfg.learning_rate)
    epoch_losses = []
    for epoch in range(1, cfg.epochs + 1):
        shuffled = fit_idx[rng.permutation(len(fit_idx))]
        total = 0.0
        for b, start in enumerate(range(0, len(shuffled), cfg.batch_size), start=1):
            idx = shuffled[start:start + cfg.batch_size]
            probs, grad = batch_gradients(spec, params, xs[idx], ys[idx])
            batch_loss = binary_crossentropy(probs, ys[idx]).sum()
            g = flatten(grad)
            if not np.isfinite(batch_loss) or not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite loss or gradient at epoch {epoch}, batch {b}")
            total += batch_loss
            flat, state = adam_step(state, flat, clip_by_global_norm(g, cfg.clip_norm))
            params = unflatten(spec, flat)
        epoch_losses.append(float(total / len(shuffled)))
        if epoch == 1 or epoch % max(1, cfg.epochs // 10) == 0:
            log.info("epoch %d/%d loss %.6f", epoch, cfg.epochs, epoch_losses[-1])

    val_scores = forward_batch(spec, params, xs[val_idx])
    val_labels = train_set.labels[val_idx]
    if 0 < val_labels.sum() < len(val_labels):
        threshold, _ = threshold_sweep(val_scores, val_labels, cfg.threshold_grid)
    else:
        log.warning("validation slice holds a single class; using threshold 0.5")
        threshold = 0.5
    return TrainedModel(spec, params, scaler or identity_scaler(), threshold, tuple(epoch_losses), cfg.seed)


def predict(model: TrainedModel, window: TrafficWindow) -> float:
    return forward_sequence(model.spec, model.params, apply_scaler(model.scaler, window))


def predict_rows(model: TrainedModel, rows, chunk: int = 4096) -> np.ndarray:
    """Probabilities for raw (unscaled) flat feature rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != N_FEATURES:
        raise ValueError(f"rows must have shape (n, {N_FEATURES}), got {rows.shape}")
    scaled = model.scaler.transform(rows)
    out = [forward_batch(model.spec, model.params, to_sequences(scaled[i:i + chunk]))
           for i in range(0, len(scaled), chunk)]
    return np.concatenate(out) if out else np.empty(0)


def classify(model: TrainedModel, window: TrafficWindow) -> int:
    return int(predict(model, window) >= model.threshold)


def classify_rows(model: TrainedModel, rows) -> np.ndarray:
    return classify_scores(predict_rows(model, rows), model.threshold)
