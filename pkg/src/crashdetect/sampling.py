"""SMOTE oversampling of the minority class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Dataset


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors <= 0:
            raise ValueError("k_neighbors must be positive")
        if self.target_ratio <= 0:
            raise ValueError("target_ratio must be positive")


def knn_indices(points, query_index: int, k: int) -> np.ndarray:
    """Indices of the k nearest other points (Euclidean), ties to the lower index."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if not 0 <= query_index < n:
        raise IndexError(f"query_index {query_index} out of range for {n} points")
    if k <= 0 or k >= n:
        raise ValueError(f"k must satisfy 0 < k < {n} (number of points), got {k}")
    dist = np.sqrt(np.sum((pts - pts[query_index]) ** 2, axis=1))
    dist[query_index] = np.inf
    return np.argsort(dist, kind="stable")[:k]


def smote_points(minority: np.ndarray, n_new: int, k: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate ``n_new`` synthetic points from ``minority`` rows.

    Seed rows are visited round-robin. Returns the synthetic rows together with
    the seed index and the chosen neighbour index for each of them.
    """
    minority = np.asarray(minority, dtype=np.float64)
    n_min = minority.shape[0]
    if k >= n_min:
        raise ValueError(f"need more than k={k} minority points, got {n_min}")
    neighbors = [knn_indices(minority, i, k) for i in range(n_min)]
    out = np.empty((n_new, minority.shape[1]))
    seeds = np.empty(n_new, dtype=np.int64)
    partners = np.empty(n_new, dtype=np.int64)
    for j in range(n_new):
        i = j % n_min
        nn = int(neighbors[i][rng.integers(k)])
        lam = rng.random()
        out[j] = minority[i] + lam * (minority[nn] - minority[i])
        seeds[j], partners[j] = i, nn
    return out, seeds, partners


def smote_oversample(dataset: Dataset, cfg: SmoteConfig = SmoteConfig(), rng=None) -> Dataset:
    """Original rows followed by synthetic minority rows.

    The minority count afterwards is ``round(target_ratio * majority count)``.
    ``rng`` overrides the generator seeded from ``cfg.seed``.
    """
    if dataset.labels is None:
        raise ValueError("SMOTE needs a labelled dataset")
    n_pos, n_neg = dataset.class_counts()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("SMOTE needs both classes present")
    minority_label = 1 if n_pos <= n_neg else 0
    n_min, n_maj = (n_pos, n_neg) if minority_label == 1 else (n_neg, n_pos)
    target = int(round(cfg.target_ratio * n_maj))
    if target < n_min:
        raise ValueError(
            f"target_ratio {cfg.target_ratio} asks for {target} minority rows but {n_min} already exist"
        )
    if n_min <= cfg.k_neighbors:
        raise ValueError(f"only {n_min} minority rows; k_neighbors={cfg.k_neighbors} needs more")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    minority = dataset.features[dataset.labels == minority_label]
    synth, _, _ = smote_points(minority, target - n_min, cfg.k_neighbors, rng)
    features = np.vstack([dataset.features, synth])
    labels = np.concatenate([dataset.labels, np.full(len(synth), minority_label)])
    return Dataset(features, labels)
