"""Named parameter storage with gradient slots and Adam state."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np


class ParameterSet:
    """Ordered collection of named float64 arrays.

    Every parameter has a gradient slot of the same shape and first/second
    moment buffers for Adam.  Flat indexing follows insertion order and C
    order inside each array.
    """

    def __init__(self) -> None:
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.values:
            raise KeyError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def names(self) -> list[str]:
        return list(self.values)

    @property
    def size(self) -> int:
        return sum(v.size for v in self.values.values())

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.values.values()]) if self.values else np.zeros(0)

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads.values()]) if self.grads else np.zeros(0)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise ValueError(f"expected {self.size} values, got {flat.size}")
        i = 0
        for v in self.values.values():
            v[...] = flat[i:i + v.size].reshape(v.shape)
            i += v.size

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for name, v in self.values.items():
            out.add(name, v.copy())
            out.m[name][...] = self.m[name]
            out.v[name][...] = self.v[name]
        out.step_count = self.step_count
        return out

    def load_values(self, other: "ParameterSet") -> None:
        for name, v in self.values.items():
            v[...] = other.values[name]

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.grads.values())))

    def clip_grad_norm(self, max_norm: float) -> float:
        norm = self.grad_norm()
        if norm > max_norm:
            scale = max_norm / (norm + 1e-12)
            for g in self.grads.values():
                g *= scale
        return norm


def adam_step(params: ParameterSet, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam descent step using the stored gradients."""
    params.step_count += 1
    t = params.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, value in params.values.items():
        g = params.grads[name]
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
