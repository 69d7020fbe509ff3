"""Training loop for the CE / CL / DPP / DPNP family.

Per epoch: renormalize prototypes onto the alpha-sphere, then for each
shuffled mini-batch compute features, pick sample and class negatives,
evaluate the method's loss and take one momentum-SGD step on the network
(with weight decay) and on the prototypes (without).
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .data import Dataset, batches
from .errors import ConfigError, ContractError, TrainingDiverged
from .losses import LossBreakdown, LossWeights, class_neg_loss, cl_loss, dpnp_loss
from .model import FeatureExtractor
from .prototypes import DEFAULT_ALPHA, PrototypeBank, norm_violations, renormalize
from .tensor import Tensor

logger = logging.getLogger(__name__)


class Method(str, enum.Enum):
    CE = "CE"
    CL = "CL"
    DPP = "DPP"
    DPNP = "DPNP"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError("method", f"unknown method {value!r}; expected one of CE, CL, DPP, DPNP") from None


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    eta: float = 0.1
    eta_c: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drop_points: tuple[float, ...] = (0.25, 0.5, 0.75)
    lr_drop_factor: float = 0.1
    loss_weights: LossWeights = field(default_factory=LossWeights)
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    method: Method = Method.DPNP

    def __post_init__(self):
        self.method = Method.parse(self.method)
        self.lr_drop_points = tuple(float(p) for p in self.lr_drop_points)
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        for name in ("eta", "eta_c"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum", "must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay", "must be >= 0")
        if not 0 < self.lr_drop_factor < 1:
            raise ConfigError("lr_drop_factor", "must lie in (0, 1)")
        pts = self.lr_drop_points
        if any(not 0 < p < 1 for p in pts) or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigError("lr_drop_points", "must be strictly increasing within (0, 1)")
        if not self.alpha > 0:
            raise ConfigError("alpha", "must be positive")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")

    def effective_weights(self) -> LossWeights:
        w = self.loss_weights
        if self.method is Method.CE:
            return LossWeights(0.0, 0.0, 0.0)
        if self.method is Method.DPP:
            return LossWeights(w.lambda_pos, 0.0, 0.0)
        return w


@dataclass
class EpochMetrics:
    epoch: int
    loss: LossBreakdown
    train_accuracy: float
    test_accuracy: float
    lr: float

    def row(self) -> dict:
        return {"epoch": self.epoch, **self.loss.as_dict(), "train_acc": self.train_accuracy,
                "test_acc": self.test_accuracy, "lr": self.lr}


@dataclass
class TrainResult:
    fx: FeatureExtractor
    bank: PrototypeBank
    history: list[EpochMetrics]
    centers: np.ndarray | None = None  # CL only: the separate center matrix
    norm_checks: list[int] = field(default_factory=list)  # violations per epoch start


def lr_factor(config: TrainConfig, epoch: int) -> float:
    k = 0
    for p in config.lr_drop_points:
        if epoch >= math.floor(p * config.epochs):
            k += 1
    return config.lr_drop_factor ** k


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    return config.eta * lr_factor(config, epoch)


class MomentumSGD:
    """Heavy-ball SGD: ``v = mu v + g + wd p; p -= lr v``. Replaces each parameter's array."""

    def __init__(self, momentum: float, weight_decay: float = 0.0):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: list[np.ndarray] | None = None

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> list[np.ndarray]:
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            if self.weight_decay:
                g = g + self.weight_decay * p
            v = self.momentum * self.velocity[k] + g
            self.velocity[k] = v
            out.append(p - lr * v)
        return out


def evaluate(fx: FeatureExtractor, bank: PrototypeBank, data: Dataset) -> float:
    """Accuracy of the inner-product rule ``argmax_j c_j . h(x)``."""
    if len(data) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    if bank.M == 1:
        return 1.0
    scores = fx.embed(data.features) @ bank.values.T
    return float(np.mean(scores.argmax(axis=1) == data.labels))


def _mean_breakdown(parts: list[tuple[LossBreakdown, int]]) -> LossBreakdown:
    n = sum(size for _, size in parts)
    vals = {k: sum(getattr(b, k) * size for b, size in parts) / n for k in LossBreakdown.FIELDS}
    return LossBreakdown(**vals)


def _diagnostics(epoch, step, breakdown, fx, bank, centers) -> dict:
    state = {
        "epoch": epoch,
        "step": step,
        "loss": breakdown.as_dict() if breakdown else None,
        "param_norms": [float(np.linalg.norm(p.data)) for p in fx.parameters()],
        "prototype_norms": np.linalg.norm(bank.values, axis=1).tolist(),
    }
    if centers is not None:
        state["center_norms"] = np.linalg.norm(centers.data, axis=1).tolist()
    return state


def train(fx: FeatureExtractor, bank: PrototypeBank, data: Dataset, config: TrainConfig,
          test: Dataset | None = None, centers: np.ndarray | None = None,
          on_epoch_start: Callable[[int, PrototypeBank], None] | None = None) -> TrainResult:
    """Train ``fx`` and ``bank`` in place and return them with per-epoch metrics.

    For ``Method.CL`` a separate center matrix is learned alongside the
    classifier; pass ``centers`` to choose its starting value (zeros by default).
    """
    if bank.M != data.M:
        raise ContractError(f"bank has {bank.M} prototypes but data has {data.M} classes")
    if fx.latent_dim != bank.d:
        raise ContractError(f"extractor outputs {fx.latent_dim} dims, prototypes have {bank.d}")
    if fx.input_dim != data.D:
        raise ContractError(f"extractor expects {fx.input_dim} inputs, data has {data.D}")
    if abs(bank.alpha - config.alpha) > 0:
        bank.alpha = config.alpha

    method = config.method
    weights = config.effective_weights()
    rng = np.random.default_rng(config.seed)
    opt_theta = MomentumSGD(config.momentum, config.weight_decay)
    opt_c = MomentumSGD(config.momentum, 0.0)
    C_centers = None
    if method is Method.CL:
        init = np.zeros((bank.M, bank.d)) if centers is None else np.asarray(centers, dtype=np.float64)
        C_centers = Tensor(init, requires_grad=True)

    history: list[EpochMetrics] = []
    norm_checks: list[int] = []
    step = 0
    for epoch in range(config.epochs):
        renormalize(bank)
        norm_checks.append(len(norm_violations(bank)))
        if on_epoch_start is not None:
            on_epoch_start(epoch, bank)
        factor = lr_factor(config, epoch)
        lr, lr_c = config.eta * factor, config.eta_c * factor
        parts: list[tuple[LossBreakdown, int]] = []
        for xb, yb in batches(data, config.batch_size, rng):
            h = fx.forward(Tensor(xb))
            if method is Method.CL:
                br = cl_loss(h, bank, C_centers, yb, config.loss_weights.lambda_pos)
            else:
                br = dpnp_loss(h, bank, yb, weights)
            if not np.isfinite(br.total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}",
                                       _diagnostics(epoch, step, br, fx, bank, C_centers))
            theta = fx.parameters()
            leaves = theta + [bank.C] + ([C_centers] if C_centers is not None else [])
            grads = T.grad(br.loss, leaves)
            n_theta = len(theta)
            fx.set_parameters(opt_theta.step([p.data for p in theta], grads[:n_theta], lr))
            proto_params = [bank.C.data] + ([C_centers.data] if C_centers is not None else [])
            new = opt_c.step(proto_params, grads[n_theta:], lr_c)
            bank.set_values(new[0])
            if C_centers is not None:
                C_centers = Tensor(new[1], requires_grad=True)
            if not all(np.all(np.isfinite(p.data)) for p in fx.parameters()) or not np.all(np.isfinite(bank.values)):
                raise TrainingDiverged(f"non-finite parameters at epoch {epoch}, step {step}",
                                       _diagnostics(epoch, step, br, fx, bank, C_centers))
            br.loss = None
            parts.append((br, len(yb)))
            step += 1
        metrics = EpochMetrics(
            epoch=epoch,
            loss=_mean_breakdown(parts),
            train_accuracy=evaluate(fx, bank, data),
            test_accuracy=evaluate(fx, bank, test) if test is not None else float("nan"),
            lr=lr,
        )
        history.append(metrics)
        logger.debug("epoch %d total=%.6f train_acc=%.4f", epoch, metrics.loss.total, metrics.train_accuracy)
    return TrainResult(fx, bank, history, None if C_centers is None else np.array(C_centers.data), norm_checks)


def spread_prototypes(bank: PrototypeBank, epochs: int = 300, steps_per_epoch: int = 10, lr: float = 20.0,
                      drop_points: Sequence[float] = (0.5, 0.75), drop_factor: float = 0.1) -> PrototypeBank:
    """Optimize the bank with the class-repulsion term alone.

    Same epoch structure as :func:`train`: renormalize at each epoch start,
    then plain gradient steps with a staged step-size schedule. Returns the
    bank renormalized after the last step.
    """
    for epoch in range(epochs):
        renormalize(bank)
        k = sum(epoch >= math.floor(p * epochs) for p in drop_points)
        step = lr * drop_factor ** k
        for _ in range(steps_per_epoch):
            (g,) = T.grad(class_neg_loss(bank), [bank.C])
            bank.set_values(bank.values - step * g)
    return renormalize(bank)
