"""Layers with hand-written reverse-mode gradients.

Each layer registers its parameters in a :class:`ParameterSet` under a name
prefix.  ``forward(params, x)`` returns ``(y, cache)``; ``backward(params,
cache, dy)`` adds parameter gradients into ``params.grads`` and returns the
gradient with respect to ``x``.  Everything is batched along axis 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParameterSet


class ShapeError(ValueError):
    pass


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


# ---------------------------------------------------------------------------
# B-splines


@dataclass(frozen=True)
class KanLayerSpec:
    in_width: int
    out_width: int
    grid_size: int = 5
    spline_order: int = 3
    grid_range: float = 2.0

    def __post_init__(self) -> None:
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.spline_order < 0:
            raise ValueError("spline_order must be >= 0")
        if self.grid_range <= 0:
            raise ValueError("grid_range must be > 0")

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.spline_order


def knot_vector(grid_size: int, order: int, grid_range: float) -> np.ndarray:
    """Uniform knots on ``[-g, g]`` extended by ``order`` knots on each side."""
    h = 2.0 * grid_range / grid_size
    return -grid_range + h * np.arange(-order, grid_size + order + 1, dtype=np.float64)


def bspline_basis(x, grid_size: int = 5, order: int = 3, grid_range: float = 2.0,
                  derivative: bool = False):
    """Degree-``order`` B-spline basis on a uniform grid, evaluated at ``x``.

    Returns an array of shape ``x.shape + (grid_size + order,)``.  Inputs are
    clamped to ``[-grid_range, grid_range]``, where the basis forms a
    partition of unity.  With ``derivative=True`` also returns d(basis)/dx,
    which is zero wherever the clamp is active.

    Only the ``order + 1`` functions supported on the cell containing ``x``
    are evaluated (de Boor's triangle; on a uniform grid every denominator
    equals the current degree).  The right end of the grid belongs to the
    last cell.
    """
    x = np.asarray(x, dtype=np.float64)
    h = 2.0 * grid_range / grid_size
    xc = np.clip(x, -grid_range, grid_range)
    cell = np.minimum(np.floor((xc + grid_range) / h), grid_size - 1)
    t = (xc + grid_range) / h - cell          # position inside the cell, in [0, 1]
    cell = cell.astype(np.intp)

    N = [np.ones_like(t)]
    prev = N
    for p in range(1, order + 1):
        prev = N
        saved = np.zeros_like(t)
        nxt = []
        for r in range(p):
            temp = prev[r] / p
            nxt.append(saved + (r + 1 - t) * temp)
            saved = (t + p - r - 1) * temp
        nxt.append(saved)
        N = nxt

    M = grid_size + order
    idx = cell[..., None] + np.arange(order + 1)   # basis functions cell .. cell + order
    B = np.zeros(x.shape + (M,))
    np.put_along_axis(B, idx, np.stack(N, axis=-1), axis=-1)
    if not derivative:
        return B
    dB = np.zeros_like(B)
    if order > 0:
        zero = np.zeros_like(t)
        lower = [zero, *prev, zero]
        d = np.stack([(lower[r] - lower[r + 1]) / h for r in range(order + 1)], axis=-1)
        d *= (np.abs(x) < grid_range)[..., None]
        np.put_along_axis(dB, idx, d, axis=-1)
    return B, dB


def cox_de_boor(i: int, p: int, t: np.ndarray, x: float) -> float:
    """Scalar textbook recursion for one basis function; used as a test oracle."""
    if p == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    out = 0.0
    if t[i + p] != t[i]:
        out += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(i, p - 1, t, x)
    if t[i + p + 1] != t[i + 1]:
        out += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(i + 1, p - 1, t, x)
    return out


# ---------------------------------------------------------------------------
# layers


class Layer:
    name: str = ""

    def init(self, params: ParameterSet, rng: np.random.Generator) -> None:
        pass

    def forward(self, params: ParameterSet, x: np.ndarray):
        raise NotImplementedError

    def backward(self, params: ParameterSet, cache, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def param_count(self) -> int:
        return 0

    def macs(self) -> int:
        return 0


class Linear(Layer):
    def __init__(self, name: str, n_in: int, n_out: int, init_scale: float = 1.0):
        self.name, self.n_in, self.n_out, self.init_scale = name, n_in, n_out, init_scale

    def init(self, params, rng):
        bound = self.init_scale / np.sqrt(self.n_in)
        params.add(f"{self.name}.W", rng.uniform(-bound, bound, (self.n_in, self.n_out)))
        params.add(f"{self.name}.b", np.zeros(self.n_out))

    def forward(self, params, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"{self.name}: expected width {self.n_in}, got {x.shape[-1]}")
        return x @ params[f"{self.name}.W"] + params[f"{self.name}.b"], x

    def backward(self, params, cache, dy):
        x = cache
        params.grads[f"{self.name}.W"] += x.T @ dy
        params.grads[f"{self.name}.b"] += dy.sum(axis=0)
        return dy @ params[f"{self.name}.W"].T

    def param_count(self):
        return self.n_in * self.n_out + self.n_out

    def macs(self):
        return self.n_in * self.n_out


class Tanh(Layer):
    def forward(self, params, x):
        y = np.tanh(x)
        return y, y

    def backward(self, params, cache, dy):
        return dy * (1.0 - cache * cache)


class Flatten(Layer):
    def forward(self, params, x):
        return x.reshape(x.shape[0], int(np.prod(x.shape[1:]))), x.shape

    def backward(self, params, cache, dy):
        return dy.reshape(cache)


class AddChannel(Layer):
    """Treat a (B, L) feature vector as a single-channel (B, 1, L) signal."""

    def forward(self, params, x):
        return x[:, None, :], None

    def backward(self, params, cache, dy):
        return dy[:, 0, :]


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1

    def out_length(self, length: int) -> int:
        if self.kernel_size > length:
            raise ShapeError(f"kernel {self.kernel_size} longer than input {length}")
        return (length - self.kernel_size) // self.stride + 1


class Conv1d(Layer):
    """Valid 1-D cross-correlation with bias; input (B, C_in, L)."""

    def __init__(self, name: str, spec: ConvSpec, length: int):
        self.name, self.spec, self.length = name, spec, length
        self.out_length = spec.out_length(length)

    def init(self, params, rng):
        s = self.spec
        bound = 1.0 / np.sqrt(s.in_channels * s.kernel_size)
        params.add(f"{self.name}.W", rng.uniform(-bound, bound,
                                                  (s.out_channels, s.in_channels, s.kernel_size)))
        params.add(f"{self.name}.b", np.zeros(s.out_channels))

    def _patches(self, x):
        s = self.spec
        idx = np.arange(self.out_length)[:, None] * s.stride + np.arange(s.kernel_size)[None, :]
        return x[:, :, idx]  # (B, C_in, L_out, k)

    def forward(self, params, x):
        s = self.spec
        if x.ndim != 3 or x.shape[1] != s.in_channels or x.shape[2] != self.length:
            raise ShapeError(f"{self.name}: expected (B, {s.in_channels}, {self.length}), got {x.shape}")
        # im2col: (B, L_out, C_in * k) rows against (C_in * k, C_out) weights
        cols = self._patches(x).transpose(0, 2, 1, 3).reshape(x.shape[0], self.out_length, s.in_channels * s.kernel_size)
        W = params[f"{self.name}.W"].reshape(s.out_channels, -1)
        y = cols @ W.T + params[f"{self.name}.b"]
        return y.transpose(0, 2, 1), cols

    def backward(self, params, cache, dy):
        s = self.spec
        cols = cache
        n = dy.shape[0]
        dy_t = dy.transpose(0, 2, 1).reshape(-1, s.out_channels)        # (B * L_out, C_out)
        W = params[f"{self.name}.W"]
        params.grads[f"{self.name}.W"] += (dy_t.T @ cols.reshape(-1, cols.shape[-1])).reshape(W.shape)
        params.grads[f"{self.name}.b"] += dy_t.sum(axis=0)
        dcols = (dy_t @ W.reshape(s.out_channels, -1)).reshape(n, self.out_length, s.in_channels,
                                                                 s.kernel_size)
        dx = np.zeros((n, s.in_channels, self.length))
        for j in range(s.kernel_size):
            dx[:, :, j: j + s.stride * (self.out_length - 1) + 1: s.stride] += \
                dcols[:, :, :, j].transpose(0, 2, 1)
        return dx

    def param_count(self):
        s = self.spec
        return s.out_channels * s.in_channels * s.kernel_size + s.out_channels

    def macs(self):
        s = self.spec
        return self.out_length * s.kernel_size * s.in_channels * s.out_channels


class KANLayer(Layer):
    """Kolmogorov-Arnold layer: a learnable spline on every input/output edge.

    ``y_j = b_j + sum_i [ W_base[i,j] silu(x_i) + W_spline[i,j] sum_m c[i,j,m] B_m(x_i) ]``
    """

    def __init__(self, name: str, spec: KanLayerSpec):
        self.name, self.spec = name, spec

    def init(self, params, rng):
        s = self.spec
        bound = 1.0 / np.sqrt(s.in_width)
        params.add(f"{self.name}.base", rng.uniform(-bound, bound, (s.in_width, s.out_width)))
        params.add(f"{self.name}.scale", np.ones((s.in_width, s.out_width)))
        params.add(f"{self.name}.coef",
                   rng.normal(0.0, 0.1 * bound, (s.in_width, s.out_width, s.n_basis)))
        params.add(f"{self.name}.b", np.zeros(s.out_width))

    def basis(self, x):
        s = self.spec
        return bspline_basis(x, s.grid_size, s.spline_order, s.grid_range, derivative=True)

    def _weights(self, params):
        # per-edge scale folded into the coefficients, laid out (in * M, out)
        n = self.name
        coef, scale = params[f"{n}.coef"], params[f"{n}.scale"]
        return (coef * scale[:, :, None]).transpose(0, 2, 1).reshape(-1, self.spec.out_width)

    def forward(self, params, x):
        s = self.spec
        if x.ndim != 2 or x.shape[1] != s.in_width:
            raise ShapeError(f"{self.name}: expected (B, {s.in_width}), got {x.shape}")
        n = self.name
        B, dB = self.basis(x)                                       # (B, in, M)
        W = self._weights(params)
        y = silu(x) @ params[f"{n}.base"] + B.reshape(len(x), W.shape[0]) @ W + params[f"{n}.b"]
        return y, (x, B, dB, W)

    def backward(self, params, cache, dy):
        s = self.spec
        n = self.name
        x, B, dB, W = cache
        base, scale, coef = params[f"{n}.base"], params[f"{n}.scale"], params[f"{n}.coef"]
        params.grads[f"{n}.base"] += silu(x).T @ dy
        G = (B.reshape(len(x), W.shape[0]).T @ dy).reshape(s.in_width, s.n_basis, s.out_width)
        G = G.transpose(0, 2, 1)                                    # (in, out, M)
        params.grads[f"{n}.scale"] += np.sum(G * coef, axis=2)
        params.grads[f"{n}.coef"] += G * scale[:, :, None]
        params.grads[f"{n}.b"] += dy.sum(axis=0)
        H = (dy @ W.T).reshape(dB.shape)
        return (dy @ base.T) * silu_grad(x) + np.sum(dB * H, axis=2)

    def param_count(self):
        s = self.spec
        return s.in_width * s.out_width * (s.n_basis + 2) + s.out_width

    def macs(self):
        s = self.spec
        return s.grid_size * s.in_width * s.out_width


class Sequential:
    """Chain of layers sharing one :class:`ParameterSet`."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def init(self, params: ParameterSet, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init(params, rng)

    def forward(self, params: ParameterSet, x: np.ndarray):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(params, x)
            caches.append(c)
        return x, caches

    def backward(self, params: ParameterSet, caches, dy: np.ndarray) -> np.ndarray:
        if caches is None:
            raise RuntimeError("backward called before forward")
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(params, c, dy)
        return dy

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)
