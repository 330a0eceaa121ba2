# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Adam and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
import logging

import numpy as np
from numpy.typing import NDArray

from .autograd import Tensor
from .exceptions import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name."""

    step: int = 0
    m: dict[str, NDArray[np.float64]] = field(default_factory=dict)
    v: dict[str, NDArray[np.float64]] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, NDArray[np.float64]],
    grads: Mapping[str, NDArray[np.float64] | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Apply one bias-corrected Adam update to ``params`` in place.

    A missing gradient (``None``) counts as zero. Moment estimates for a
    parameter start at zero the first time it is seen.

    Args:
        params: Parameter arrays, updated in place
        grads: Gradients with the same keys and shapes
        state: Moment estimates from the previous step
        lr: Learning rate
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator offset

    Returns:
        The updated state (the same object)

    Raises:
        ShapeError: If a gradient does not match its parameter
    """
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise ShapeError(f"adam_step[{name}]", p.shape, g.shape)
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    """Adam over a fixed set of named tensors."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        """Update every parameter from its accumulated ``grad``."""
        adam_step(
            {name: p.values for name, p in self.params.items()},
            {name: p.grad for name, p in self.params.items()},
            self.state,
            self.lr,
            *self.betas,
            eps=self.eps,
        )


class ReduceLROnPlateau:
    """Scale the optimizer's learning rate down when a metric stalls.

    Tracks the lowest validation loss seen so far. After ``patience``
    consecutive evaluations without an improvement the rate is multiplied
    by ``factor``, never going below ``min_lr``.
    """

    def __init__(
        self,
        optimizer: Adam,
        factor: float = 0.5,
        patience: int = 10,
        min_lr: float = 1e-6,
        threshold: float = 1e-4,
    ):
        if not 0.0 < factor < 1.0:
            msg = f"factor must be in (0, 1), got {factor}"
            raise ValueError(msg)
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = float("inf")
        self.bad_evals = 0

    def step(self, metric: float) -> bool:
        """Record a validation value; return True when the rate was reduced."""
        if metric < self.best * (1.0 - self.threshold):
            self.best = metric
            self.bad_evals = 0
            return False
        self.bad_evals += 1
        if self.bad_evals <= self.patience:
            return False
        self.bad_evals = 0
        new_lr = max(self.optimizer.lr * self.factor, self.min_lr)
        if new_lr >= self.optimizer.lr:
            return False
        logger.info(f"Reducing learning rate {self.optimizer.lr:.3g} -> {new_lr:.3g}")
        self.optimizer.lr = new_lr
        return True
