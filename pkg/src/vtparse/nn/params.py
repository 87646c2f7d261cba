"""Parameter containers, model hyperparameters and initialisation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigurationError, NumericError
from .tensor import Tensor


@dataclass
class ModelConfig:
    word_dim: int = 80
    pos_dim: int = 80
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    layers: int = 1
    dropout: float = 0.5
    learning_rate: float = 0.01
    grad_clip: float = 0.25
    pretrain_grad_clip: float = 0.5
    l2: float = 1e-4
    mc_samples: int = 20
    epsilon: float = 0.1
    # not part of the published table; only used in lexicalized mode
    cluster_dim: int = 16
    lexicalized: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("dropout", "l2", "lexicalized"):
                continue
            if v <= 0:
                raise ConfigurationError(f"{f.name} must be positive, got {v}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must lie in [0, 1)")
        if self.l2 < 0:
            raise ConfigurationError("l2 must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def glorot(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ParamStore:
    """Named trainable arrays plus their AdaGrad accumulators.

    Arrays registered with ``frozen=True`` take part in the forward pass but
    are never updated (e.g. pretrained embedding tables).
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.accum: dict[str, np.ndarray] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, value, frozen: bool = False) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        value = np.array(value, dtype=np.float64)
        t = Tensor(value, requires_grad=not frozen, name=name)
        self.params[name] = t
        if frozen:
            self.frozen.add(name)
        else:
            self.accum[name] = np.zeros_like(value)
        return t

    def matrix(self, name: str, shape, rng: np.random.Generator) -> Tensor:
        return self.add(name, glorot(rng, shape))

    def bias(self, name: str, size: int) -> Tensor:
        return self.add(name, np.zeros(size))

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def trainable(self):
        return [(k, t) for k, t in self.params.items() if k not in self.frozen]

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in self.trainable()
        }

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays: dict, accum: dict | None = None):
        for k, t in self.params.items():
            if k not in arrays:
                raise KeyError(f"missing parameter {k}")
            v = np.asarray(arrays[k], dtype=np.float64)
            if v.shape != t.data.shape:
                raise ValueError(f"{k}: shape {v.shape} != {t.data.shape}")
            t.data = v.copy()
        if accum:
            for k, v in accum.items():
                if k in self.accum:
                    self.accum[k] = np.asarray(v, dtype=np.float64).copy()

    def check_finite(self):
        for k, t in self.params.items():
            if not np.isfinite(t.data).all():
                raise NumericError(f"parameter {k} has non-finite values")

    def size(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def copy_from(self, other: "ParamStore"):
        self.load_arrays(other.arrays(), other.accum)
