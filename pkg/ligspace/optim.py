"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ligspace.errors import ShapeError
from ligspace.tensor import Tensor


@dataclass
class AdamState:
    """First/second moments per parameter name plus the step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("Learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
) -> Mapping[str, Tensor]:
    """Apply one bias-corrected Adam update in place.

    Parameters without a gradient are treated as having a zero gradient, so
    their moments still decay.

    Args:
        params: Parameter tensors by name
        grads: Gradient arrays by name (``None`` means zero)
        state: Optimizer state, advanced by one step

    Returns:
        The same mapping, with updated tensor data

    Raises:
        ShapeError: If a gradient or stored moment does not match its parameter
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ShapeError(f"moment for '{name}' has shape {m.shape}, parameter {p.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    """Convenience wrapper pairing parameters with an :class:`AdamState`."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, {k: p.grad for k, p in self.params.items()}, self.state)


__all__ = ["AdamState", "adam_step", "Adam"]
