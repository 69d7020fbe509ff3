"""Loss terms: scaled-softmax cross-entropy, center pull, and prototype repulsion.

Every function takes the latent batch ``h`` (B, d) as a Tensor and returns a
scalar Tensor (or a :class:`LossBreakdown` for the composite objectives).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .prototypes import PrototypeBank, class_negatives, logits, sample_negatives
from .tensor import HALF_POWER_EPS, Tensor


class NoNegativeWarning(UserWarning):
    """Emitted when a repulsion term is requested with a single class."""


@dataclass(frozen=True)
class LossWeights:
    lambda_pos: float = 0.1
    lambda_neg_sample: float = 0.1
    lambda_neg_class: float = 0.1

    def __post_init__(self):
        for name in ("lambda_pos", "lambda_neg_sample", "lambda_neg_class"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(name, f"must be finite and >= 0, got {v}")

    @classmethod
    def low_dim(cls) -> "LossWeights":
        return cls(0.01, 0.01, 0.02)


@dataclass
class LossBreakdown:
    """Unweighted term values plus the weighted total.

    ``neg_sample`` and ``neg_class`` are the signed (<= 0) repulsion values.
    ``loss`` is the differentiable total; it is not part of equality.
    """

    ce: float
    pos: float
    neg_sample: float
    neg_class: float
    total: float
    loss: Tensor | None = field(default=None, repr=False, compare=False)

    FIELDS = ("ce", "pos", "neg_sample", "neg_class", "total")

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.FIELDS}


def _check_labels(labels, B: int, M: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.intp)
    if y.shape != (B,):
        raise ContractError(f"expected {B} labels, got shape {y.shape}")
    if B and (y.min() < 0 or y.max() >= M):
        raise ContractError(f"labels must lie in [0, {M})")
    return y


def ce_loss(z: Tensor, labels) -> Tensor:
    """Mean cross-entropy of already-scaled logits ``z`` (B, M)."""
    if z.ndim != 2:
        raise ContractError("logits must be (B, M)")
    B, M = z.shape
    y = _check_labels(labels, B, M)
    onehot = np.zeros((B, M))
    onehot[np.arange(B), y] = 1.0
    picked = T.sum(T.mul(z, Tensor(onehot)), axis=1)
    return T.scale(T.sum(T.sub(T.logsumexp(z), picked)), 1.0 / B)


def center_term(h: Tensor, centers: Tensor, labels) -> Tensor:
    """``1/(2B) * sum_i ||h_i - c_{y_i}||^2``."""
    B = h.shape[0]
    y = _check_labels(labels, B, centers.shape[0])
    if h.ndim != 2 or h.shape[1] != centers.shape[1]:
        raise ContractError(f"features {h.shape} do not match centers {centers.shape}")
    diff = T.sub(h, T.gather_rows(centers, y))
    return T.scale(T.sum(T.square(diff)), 0.5 / B)


def _zero_with_warning(what: str) -> Tensor:
    warnings.warn(f"{what}: single class, repulsion term is 0", NoNegativeWarning, stacklevel=3)
    return Tensor(0.0)


def sample_neg_loss(h: Tensor, bank: PrototypeBank, labels, eps: float = HALF_POWER_EPS,
                    negatives: np.ndarray | None = None) -> Tensor:
    """``-1/(2B) * sum_i sum_t |h_i - c_neg(i)|_t^(1/2)``, negatives picked per sample.

    The argmin is taken on current values and held fixed; gradients reach both
    ``h`` and the selected prototype rows.
    """
    B = h.shape[0]
    y = _check_labels(labels, B, bank.M)
    if bank.M < 2:
        return _zero_with_warning("sample_neg_loss")
    if negatives is None:
        negatives = sample_negatives(bank.values, h.data, y)
    diff = T.sub(h, T.gather_rows(bank.C, negatives))
    return T.scale(T.sum(T.half_power(diff, eps)), -0.5 / B)


def class_neg_loss(bank: PrototypeBank, eps: float = HALF_POWER_EPS,
                   negatives: np.ndarray | None = None) -> Tensor:
    """``-1/(2M) * sum_j sum_t |c_j - c_neg(j)|_t^(1/2)`` over all classes."""
    M = bank.M
    if M < 2:
        return _zero_with_warning("class_neg_loss")
    if negatives is None:
        negatives = class_negatives(bank.values)
    diff = T.sub(bank.C, T.gather_rows(bank.C, negatives))
    return T.scale(T.sum(T.half_power(diff, eps)), -0.5 / M)


def _breakdown(terms: dict[str, Tensor], weights: dict[str, float]) -> LossBreakdown:
    total = terms["ce"]
    for name in ("pos", "neg_sample", "neg_class"):
        total = T.add(total, T.scale(terms[name], weights[name]))
    vals = {k: v.item() for k, v in terms.items()}
    return LossBreakdown(vals["ce"], vals["pos"], vals["neg_sample"], vals["neg_class"], total.item(), total)


def cl_loss(h: Tensor, bank: PrototypeBank, centers: Tensor, labels, lambda_center: float) -> LossBreakdown:
    """Center-loss baseline: CE on ``bank`` plus a pull toward a *separate* ``centers`` matrix."""
    terms = {
        "ce": ce_loss(logits(bank, h), labels),
        "pos": center_term(h, centers, labels),
        "neg_sample": Tensor(0.0),
        "neg_class": Tensor(0.0),
    }
    return _breakdown(terms, {"pos": lambda_center, "neg_sample": 0.0, "neg_class": 0.0})


def dpp_loss(h: Tensor, bank: PrototypeBank, labels, weights: LossWeights) -> LossBreakdown:
    """Scaled CE plus positive-prototype pull, both reading ``bank.C``."""
    terms = {
        "ce": ce_loss(logits(bank, h), labels),
        "pos": center_term(h, bank.C, labels),
        "neg_sample": Tensor(0.0),
        "neg_class": Tensor(0.0),
    }
    return _breakdown(terms, {"pos": weights.lambda_pos, "neg_sample": 0.0, "neg_class": 0.0})


def dpnp_loss(h: Tensor, bank: PrototypeBank, labels, weights: LossWeights,
              eps: float = HALF_POWER_EPS) -> LossBreakdown:
    """DPP plus sample-level and class-level negative-prototype repulsion.

    All four terms are always evaluated so the breakdown is populated even
    when a weight is zero; a zero weight contributes exactly nothing.
    """
    y = _check_labels(labels, h.shape[0], bank.M)
    if bank.M < 2:
        neg_s = neg_c = Tensor(0.0)
    else:
        neg_s = sample_neg_loss(h, bank, y, eps)
        neg_c = class_neg_loss(bank, eps)
    terms = {
        "ce": ce_loss(logits(bank, h), y),
        "pos": center_term(h, bank.C, y),
        "neg_sample": neg_s,
        "neg_class": neg_c,
    }
    return _breakdown(terms, {
        "pos": weights.lambda_pos,
        "neg_sample": weights.lambda_neg_sample,
        "neg_class": weights.lambda_neg_class,
    })
