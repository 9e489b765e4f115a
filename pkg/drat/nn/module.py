"""Parameter containers."""
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from drat.core import ops
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor


def init_tensor(rng: np.random.Generator, shape: Tuple[int, ...], scale: float, name: Optional[str] = None) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True, name=name)


def zeros(shape: Tuple[int, ...], name: Optional[str] = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape: Tuple[int, ...], name: Optional[str] = None) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, name=name)


class Module:
    """
    Base class for anything that owns tensors.

    Parameters are discovered from attributes in assignment order: ``Tensor``
    attributes, child ``Module`` attributes and lists of modules.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{index}.")

    def parameters(self) -> List[Tensor]:
        """Trainable tensors only."""
        return [p for _, p in self.named_parameters() if p.requires_grad]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def freeze(self) -> None:
        for _, p in self.named_parameters():
            p.requires_grad = False
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ContractViolation(
                "state does not match the module",
                context={"missing": missing, "unexpected": unexpected},
            )
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ContractViolation(f"{name}: stored shape {value.shape} != {p.shape}")
            p.data = value.copy()
            p.zero_grad()


class Linear(Module):
    """``x @ W + b`` with ``W`` shaped (in, out)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        scale: Optional[float] = None,
        bias_scale: float = 0.0,
    ):
        scale = 1.0 / np.sqrt(in_features) if scale is None else scale
        self.weight = init_tensor(rng, (in_features, out_features), scale) if scale > 0 else zeros((in_features, out_features))
        if not bias:
            self.bias = None
        elif bias_scale > 0:
            self.bias = init_tensor(rng, (out_features,), bias_scale)
        else:
            self.bias = zeros((out_features,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, width: int):
        self.gamma = ones((width,))
        self.beta = zeros((width,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta)
