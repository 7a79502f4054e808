"""Training pipeline: split, scale, oversample, train."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .dataio import Dataset, fit_scaler, scale_dataset, split
from .evaluation import EvalReport, evaluate
from .sampling import smote_oversample
from .training import TrainedModel, predict_rows, train

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage


@contextmanager
def stage(name: str):
    log.info("stage: %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class PipelineResult:
    model: TrainedModel
    train_indices: np.ndarray
    test_indices: np.ndarray


def fit_pipeline(ds: Dataset, cfg: RunConfig) -> PipelineResult:
    """Split 65/35, fit the scaler on train, SMOTE the scaled train rows, train.

    Test rows are only indexed here; their labels are never read.
    """
    with stage("split"):
        if ds.labels is None:
            raise ValueError("dataset has no label column")
        train_idx, test_idx = split(ds, cfg.train_fraction, cfg.split_seed)
        train_raw = ds.subset(train_idx)
    with stage("scale"):
        scaler = fit_scaler(train_raw)
        train_scaled = scale_dataset(scaler, train_raw)
    with stage("smote"):
        balanced = smote_oversample(train_scaled, cfg.smote)
        n_pos, n_neg = balanced.class_counts()
        log.info("after SMOTE: %d accident / %d non-accident rows", n_pos, n_neg)
    with stage("train"):
        model = train(balanced, cfg.network_spec(), cfg.train, scaler)
    return PipelineResult(model, train_idx, test_idx)


def evaluate_partition(model: TrainedModel, ds: Dataset, indices) -> EvalReport:
    test = ds.subset(indices)
    if test.labels is None:
        raise ValueError("evaluation data has no label column")
    scores = predict_rows(model, test.features)
    return evaluate(scores, test.labels, model.threshold)
