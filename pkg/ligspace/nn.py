"""Parameter containers and small layer helpers shared by the models."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ligspace.tensor import Tensor, add, layernorm, matmul, mul, silu


class ParamDict(OrderedDict):
    """Ordered ``name -> Tensor`` mapping; insertion order is the checkpoint order."""

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self:
            raise ValueError(f"Duplicate parameter name '{name}'")
        tensor = Tensor(value, requires_grad=True)
        self[name] = tensor
        return tensor

    def copy(self) -> "ParamDict":
        out = ParamDict()
        for name, p in self.items():
            out[name] = Tensor(p.data, requires_grad=p.requires_grad)
        return out

    def astype(self, dtype) -> "ParamDict":
        out = ParamDict()
        for name, p in self.items():
            out[name] = Tensor(p.data, requires_grad=p.requires_grad, dtype=dtype)
        return out

    def requires_grad_(self, flag: bool) -> "ParamDict":
        for p in self.values():
            p.requires_grad = flag
            p.grad = None
        return self

    def zero_grad(self) -> None:
        for p in self.values():
            p.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.items()}

    def count(self) -> int:
        return int(sum(p.size for p in self.values()))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform Glorot initialisation for a ``fan_in x fan_out`` weight."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def affine_layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    return add(mul(layernorm(x, eps=eps), gain), bias)


def mlp(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Two affine maps with a SiLU in between."""
    return linear(silu(linear(x, w1, b1)), w2, b2)


__all__ = ["ParamDict", "glorot", "linear", "affine_layernorm", "mlp"]
