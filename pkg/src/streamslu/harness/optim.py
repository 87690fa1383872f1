"""Optimizers over flat parameter vectors."""
from __future__ import annotations

from typing import Optional

import numpy as np
import numpy.typing as npt

from streamslu.harness.config import OptimizerConfig
from streamslu.kernel.errors import ConfigError

Vector = npt.NDArray[np.float64]


def clip_by_norm(grad: Vector, max_norm: float) -> Vector:
    if max_norm <= 0:
        return grad
    norm = float(np.linalg.norm(grad))
    return grad * (max_norm / norm) if norm > max_norm else grad


class Optimizer:
    """``step`` returns updated parameters; entries outside ``trainable`` never move."""

    def __init__(self, config: OptimizerConfig, size: int):
        self.config = config
        self.size = size
        self.steps = 0

    def step(self, params: Vector, grad: Vector, trainable: Optional[npt.NDArray[np.bool_]] = None) -> Vector:
        if grad.shape != params.shape or params.shape != (self.size,):
            raise ValueError(f"expected vectors of size {self.size}, got {params.shape} and {grad.shape}")
        self.steps += 1
        grad = clip_by_norm(grad, self.config.clip_norm)
        update = self._update(params, grad)
        if trainable is not None:
            update = np.where(trainable, update, 0.0)
        return params - update

    def _update(self, params: Vector, grad: Vector) -> Vector:
        raise NotImplementedError


class Sgd(Optimizer):
    def _update(self, params: Vector, grad: Vector) -> Vector:
        c = self.config
        return c.learning_rate * (grad + c.weight_decay * params)


class Adam(Optimizer):
    """Adam; weight decay is either folded into the gradient or decoupled (AdamW)."""

    def __init__(self, config: OptimizerConfig, size: int, decoupled: bool = False):
        super().__init__(config, size)
        self.decoupled = decoupled
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def _update(self, params: Vector, grad: Vector) -> Vector:
        c = self.config
        if not self.decoupled:
            grad = grad + c.weight_decay * params
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * grad**2
        m_hat = self.m / (1.0 - c.beta1**self.steps)
        v_hat = self.v / (1.0 - c.beta2**self.steps)
        update = c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)
        if self.decoupled:
            update = update + c.learning_rate * c.weight_decay * params
        return update


def build_optimizer(config: OptimizerConfig, size: int) -> Optimizer:
    if config.kind == "adamw":
        return Adam(config, size, decoupled=True)
    if config.kind == "adam":
        return Adam(config, size)
    if config.kind == "sgd":
        return Sgd(config, size)
    raise ConfigError(f"unknown optimizer '{config.kind}'")
