"""Unified class prototypes: one matrix that is both classifier weights and class centers."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DegeneratePrototypeError, NoNegativeError, ParseError
from .tensor import Tensor

DEFAULT_ALPHA = 40.0
DEGENERATE_NORM = 1e-12


@dataclass
class PrototypeBank:
    C: Tensor
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.C.ndim != 2 or self.C.shape[0] < 1 or self.C.shape[1] < 1:
            raise ConfigError("prototypes", f"need a non-empty (M, d) matrix, got {self.C.shape}")
        if not self.alpha > 0:
            raise ConfigError("alpha", "must be positive")

    @property
    def M(self) -> int:
        return self.C.shape[0]

    @property
    def d(self) -> int:
        return self.C.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.C.data

    def set_values(self, arr: np.ndarray) -> None:
        self.C = Tensor(arr, requires_grad=True)

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(Tensor(self.C.data, True), self.alpha)


def init_prototypes(M: int, d: int, alpha: float = DEFAULT_ALPHA, seed: int = 0) -> PrototypeBank:
    if M < 1:
        raise ConfigError("M", "must be >= 1")
    if d < 1:
        raise ConfigError("d", "must be >= 1")
    if not alpha > 0:
        raise ConfigError("alpha", "must be positive")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((M, d))
    C = alpha * raw / np.linalg.norm(raw, axis=1, keepdims=True)
    assert len(np.unique(C, axis=0)) == M, "duplicate prototype rows"
    return PrototypeBank(Tensor(C, requires_grad=True), float(alpha))


def renormalize(bank: PrototypeBank) -> PrototypeBank:
    """Project every row back onto the radius-alpha sphere (in place on ``bank``)."""
    C = bank.C.data
    norms = np.linalg.norm(C, axis=1, keepdims=True)
    bad = np.flatnonzero(norms[:, 0] < DEGENERATE_NORM)
    if bad.size:
        raise DegeneratePrototypeError(f"prototype rows {bad.tolist()} have zero norm")
    bank.set_values(bank.alpha * (C / norms))
    return bank


def norm_violations(bank: PrototypeBank, rel_tol: float = 1e-9) -> list[int]:
    norms = np.linalg.norm(bank.C.data, axis=1)
    return np.flatnonzero(np.abs(norms - bank.alpha) > rel_tol * bank.alpha).tolist()


def logits(bank: PrototypeBank, h: Tensor) -> Tensor:
    """``h C^T / alpha``, the scaled inner-product scores fed to softmax."""
    if h.ndim != 2 or h.shape[1] != bank.d:
        raise ContractError(f"features {h.shape} do not match prototype dim {bank.d}")
    return T.scale(T.matmul(h, T.transpose(bank.C)), 1.0 / bank.alpha)


def _squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def sample_negatives(C: np.ndarray, h: np.ndarray, labels) -> np.ndarray:
    """Index of the nearest prototype of another class for every row of ``h``.

    Ties go to the smallest class index (``argmin`` returns the first hit).
    """
    C = np.asarray(C)
    labels = np.asarray(labels, dtype=np.intp)
    if C.shape[0] < 2:
        raise NoNegativeError("a negative prototype needs at least two classes")
    dist = _squared_distances(np.asarray(h), C)
    dist[np.arange(len(labels)), labels] = np.inf
    return dist.argmin(axis=1)


def class_negatives(C: np.ndarray) -> np.ndarray:
    """Index of the nearest other prototype for every prototype."""
    C = np.asarray(C)
    if C.shape[0] < 2:
        raise NoNegativeError("a negative prototype needs at least two classes")
    dist = _squared_distances(C, C)
    np.fill_diagonal(dist, np.inf)
    return dist.argmin(axis=1)


def nearest_negative_for_sample(bank: PrototypeBank, h_i, y_i: int) -> tuple[int, np.ndarray]:
    h_i = np.asarray(h_i.data if isinstance(h_i, Tensor) else h_i, dtype=np.float64)
    if not 0 <= y_i < bank.M:
        raise ContractError(f"label {y_i} out of range for {bank.M} classes")
    j = int(sample_negatives(bank.values, h_i[None, :], [y_i])[0])
    return j, bank.values[j]


def nearest_negative_for_class(bank: PrototypeBank, j: int) -> tuple[int, np.ndarray]:
    if not 0 <= j < bank.M:
        raise ContractError(f"class {j} out of range for {bank.M} classes")
    k = int(class_negatives(bank.values)[j])
    return k, bank.values[k]


def write_prototypes_csv(path, C: np.ndarray) -> None:
    C = np.asarray(C)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class"] + [f"c{t}" for t in range(C.shape[1])])
        for j, row in enumerate(C):
            w.writerow([j] + [repr(float(v)) for v in row])


def read_prototypes_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["class"]:
        raise ParseError(path, 1, "missing 'class,c0,...' header")
    d = len(rows[0]) - 1
    out = np.zeros((len(rows) - 1, d))
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != d + 1:
            raise ParseError(path, n, f"expected {d + 1} columns, got {len(row)}")
        try:
            j = int(row[0])
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ParseError(path, n, str(exc)) from None
        if j != n - 2:
            raise ParseError(path, n, f"class ids must be 0..M-1 in order, got {j}")
        out[j] = vals
    return out
