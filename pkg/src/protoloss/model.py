"""Feature extractor: a plain ReLU multilayer perceptron."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, ParseError
from .tensor import Tensor

THETA_MAGIC = b"PROTOLOSS-THETA\0"


@dataclass
class MlpConfig:
    layer_dims: list[int]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.layer_dims) < 2:
            raise ConfigError("layer_dims", "need at least input and output sizes")
        if any(d < 1 for d in self.layer_dims):
            raise ConfigError("layer_dims", f"all sizes must be >= 1, got {self.layer_dims}")
        if self.activation != "relu":
            raise ConfigError("activation", f"unsupported activation {self.activation!r}")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def latent_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class FeatureExtractor:
    """Weights are stored (out, in) as in ``h = x W^T + b``."""

    weights: list[Tensor]
    biases: list[Tensor] = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractError("need one bias per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ContractError(f"layer {k}: weight {w.shape} does not match bias {b.shape}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ContractError(f"layer {k}: input size {w.shape[1]} does not chain")

    @classmethod
    def from_config(cls, config: MlpConfig) -> "FeatureExtractor":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(config.seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(config.layer_dims[:-1], config.layer_dims[1:]):
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
            weights.append(Tensor(w, requires_grad=True))
            biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
        return cls(weights, biases)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.weights[-1].shape[0]

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params += [w, b]
        return params

    def set_parameters(self, arrays) -> None:
        arrays = list(arrays)
        for k in range(len(self.weights)):
            self.weights[k] = Tensor(arrays[2 * k], requires_grad=True)
            self.biases[k] = Tensor(arrays[2 * k + 1], requires_grad=True)

    def forward(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ContractError(f"expected input of shape (B, {self.input_dim}), got {x.shape}")
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = T.add_bias(T.matmul(h, T.transpose(w)), b)
            if k < last:
                h = T.relu(h)
        return h

    __call__ = forward

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on plain arrays, no graph recorded."""
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data.T + b.data
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    def copy(self) -> "FeatureExtractor":
        return FeatureExtractor([Tensor(w.data, True) for w in self.weights],
                                [Tensor(b.data, True) for b in self.biases])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(THETA_MAGIC)
            for p in self.parameters():
                fh.write(struct.pack("<I", p.ndim))
                fh.write(struct.pack(f"<{p.ndim}I", *p.shape))
                fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "FeatureExtractor":
        arrays = read_theta(path)
        if len(arrays) % 2:
            raise ParseError(path, 0, "odd number of tensors; expected weight/bias pairs")
        return cls([Tensor(a, True) for a in arrays[0::2]], [Tensor(a, True) for a in arrays[1::2]])


def read_theta(path) -> list[np.ndarray]:
    raw = Path(path).read_bytes()
    if not raw.startswith(THETA_MAGIC):
        raise ParseError(path, 0, "bad magic header")
    pos = len(THETA_MAGIC)
    arrays = []
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise ParseError(path, 0, f"truncated rank at byte {pos}")
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(dims, dtype=np.int64))
        if pos + 8 * n > len(raw):
            raise ParseError(path, 0, f"truncated data at byte {pos}")
        arrays.append(np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(dims).astype(np.float64))
        pos += 8 * n
    return arrays
