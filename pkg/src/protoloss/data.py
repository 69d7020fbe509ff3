"""Datasets: synthetic Gaussian blobs, a CSV reader/writer, and mini-batching."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, ContractError, ParseError


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    M: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.features.ndim != 2 or len(self.features) < 1:
            raise ContractError("features must be a non-empty (N, D) matrix")
        if self.labels.shape != (len(self.features),):
            raise ContractError("one label per feature row required")
        if self.labels.min() < 0 or self.labels.max() >= self.M:
            raise ContractError(f"labels must lie in [0, {self.M})")
        if not np.all(np.isfinite(self.features)):
            raise ContractError("features must be finite")
        if self.split not in ("train", "test"):
            raise ContractError(f"unknown split {self.split!r}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def D(self) -> int:
        return self.features.shape[1]


def gaussian_blobs(M: int, D: int, n_per_class: int, center_scale: float = 5.0,
                   noise_sigma: float = 1.0, seed: int = 0,
                   train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """Isotropic Gaussian classes whose means sit on a sphere of radius ``center_scale``.

    The split is stratified: the first ``train_fraction`` of each class's
    draws go to train. Both splits are then shuffled.
    """
    for name, v in (("M", M), ("D", D), ("n_per_class", n_per_class)):
        if int(v) != v or v < 1:
            raise ConfigError(name, f"must be a positive integer, got {v}")
    if not center_scale > 0:
        raise ConfigError("center_scale", "must be positive")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma", "must be >= 0")
    n_train = int(round(train_fraction * n_per_class))
    if not 1 <= n_train < n_per_class:
        raise ConfigError("n_per_class", f"too small for a {train_fraction:.0%} split")

    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((M, D))
    centers = center_scale * raw / np.linalg.norm(raw, axis=1, keepdims=True)
    xs = centers[:, None, :] + noise_sigma * rng.standard_normal((M, n_per_class, D))
    ys = np.repeat(np.arange(M), n_per_class).reshape(M, n_per_class)

    def split(sl, tag):
        X = xs[:, sl].reshape(-1, D)
        y = ys[:, sl].reshape(-1)
        perm = rng.permutation(len(y))
        return Dataset(X[perm], y[perm], M, tag)

    train = split(slice(0, n_train), "train")
    test = split(slice(n_train, None), "test")
    return train, test


def class_means(data: Dataset) -> np.ndarray:
    return np.stack([data.features[data.labels == j].mean(axis=0) for j in range(data.M)])


def save_csv(path, data: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, y in zip(data.features, data.labels):
            w.writerow([int(y)] + [repr(float(v)) for v in x])


def load_csv(path, M: int, rescale: bool = False, split: str = "train") -> Dataset:
    """Rows are ``label,feat0,...``. With ``rescale`` each column is min-max mapped to [0, 1]."""
    path = Path(path)
    labels, rows = [], []
    D = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise ParseError(path, lineno, "need a label and at least one feature")
            if D is None:
                D = len(row) - 1
            elif len(row) - 1 != D:
                raise ParseError(path, lineno, f"expected {D} features, got {len(row) - 1}")
            try:
                label = int(row[0])
                feats = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ParseError(path, lineno, f"non-numeric cell ({exc})") from None
            if not 0 <= label < M:
                raise ParseError(path, lineno, f"label {label} outside [0, {M})")
            if not all(np.isfinite(feats)):
                raise ParseError(path, lineno, "non-finite feature")
            labels.append(label)
            rows.append(feats)
    if not rows:
        raise ParseError(path, 1, "no data rows")
    X = np.array(rows)
    if rescale:
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = (X - lo) / span
    return Dataset(X, np.array(labels), M, split)


def write_generated(out_dir, train: Dataset, test: Dataset, meta: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(out / "train.csv", train)
    save_csv(out / "test.csv", test)
    meta = {**meta, "M": train.M, "D": train.D, "n_train": len(train), "n_test": len(test)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def batches(data: Dataset, batch_size: int, rng: np.random.Generator) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One shuffled pass; the last batch may be short."""
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    order = rng.permutation(len(data))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield data.features[idx], data.labels[idx]
