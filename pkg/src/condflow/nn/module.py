"""Minimal parameter container and the two standard layers."""
from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from ..errors import ConfigError, DimensionError
from ..tensor import Tensor, layer_norm, matmul
from ..tensor.core import get_default_dtype


def param(arr: np.ndarray) -> Tensor:
    return Tensor(arr, requires_grad=True)


class Module:
    """Base class: parameters are tensor attributes, children are module attributes.

    Attribute names form the hierarchical parameter name, e.g.
    ``block3.self.Wq``.  Attributes starting with an underscore are skipped.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        unexpected = state.keys() - own.keys()
        if missing or unexpected:
            raise ConfigError(
                f"state dict mismatch: missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}"
            )
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ConfigError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = np.array(arr, dtype=p.dtype)

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """``y = x @ W + b`` with ``W`` stored as [in, out]."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True, zero: bool = False):
        dtype = get_default_dtype()
        if zero:
            w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            w = (rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / (d_in + d_out))).astype(dtype)
        self.W = param(w)
        if bias:
            self.b = param(np.zeros(d_out, dtype=dtype))

    def forward(self, x) -> Tensor:
        if x.shape[-1] != self.W.shape[0]:
            raise DimensionError(f"Linear expects last axis {self.W.shape[0]}, got {x.shape}")
        y = matmul(x, self.W)
        return y + self.b if hasattr(self, "b") else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        dtype = get_default_dtype()
        self.gain = param(np.ones(d, dtype=dtype))
        self.bias = param(np.zeros(d, dtype=dtype))
        self._eps = eps

    def forward(self, x) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self._eps)
