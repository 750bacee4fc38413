"""Actor and critic networks plus the squashed diagonal Gaussian head."""

from __future__ import annotations

import math

import numpy as np

from ..config import NetworkConfig
from .layers import (AddChannel, Conv1d, ConvSpec, Flatten, KANLayer, KanLayerSpec, Linear,
                     Sequential, ShapeError, Tanh)
from .params import ParameterSet

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _conv_stack(prefix: str, obs_dim: int, net: NetworkConfig):
    layers = [AddChannel()]
    length, channels = obs_dim, 1
    for j, (c, k, s) in enumerate(zip(net.conv_channels, net.conv_kernels, net.conv_strides)):
        conv = Conv1d(f"{prefix}.conv{j}", ConvSpec(channels, c, k, s), length)
        layers += [conv, Tanh()]
        length, channels = conv.out_length, c
    layers.append(Flatten())
    return layers, length * channels


def build_actor_body(variant: str, obs_dim: int, act_dim: int, net: NetworkConfig,
                     prefix: str = "actor") -> Sequential:
    """Network mapping observations to the pre-squash mean logits.

    ``ckan``: conv stack, then two KAN layers.  ``cnn``: the same conv stack
    followed by an MLP head.  ``mlp``: two tanh hidden layers.
    """
    if variant == "ckan":
        layers, flat = _conv_stack(prefix, obs_dim, net)
        kan = dict(grid_size=net.kan_grid, spline_order=net.kan_order, grid_range=net.kan_range)
        layers += [KANLayer(f"{prefix}.kan0", KanLayerSpec(flat, net.hidden, **kan)),
                   KANLayer(f"{prefix}.kan1", KanLayerSpec(net.hidden, act_dim, **kan))]
    elif variant == "cnn":
        layers, flat = _conv_stack(prefix, obs_dim, net)
        layers += [Linear(f"{prefix}.fc0", flat, net.hidden), Tanh(),
                   Linear(f"{prefix}.out", net.hidden, act_dim, init_scale=0.1)]
    elif variant == "mlp":
        layers = [Linear(f"{prefix}.fc0", obs_dim, net.hidden), Tanh(),
                  Linear(f"{prefix}.fc1", net.hidden, net.hidden), Tanh(),
                  Linear(f"{prefix}.out", net.hidden, act_dim, init_scale=0.1)]
    else:
        raise ValueError(f"unknown actor variant {variant!r}")
    return Sequential(layers)


class Actor:
    """Gaussian policy with a tanh-bounded mean and state-independent log-std."""

    def __init__(self, variant: str, obs_dim: int, act_dim: int, net: NetworkConfig,
                 prefix: str = "actor"):
        self.variant, self.obs_dim, self.act_dim, self.prefix = variant, obs_dim, act_dim, prefix
        self.log_std_init = net.log_std_init
        self.body = build_actor_body(variant, obs_dim, act_dim, net, prefix)

    def init(self, params: ParameterSet, rng: np.random.Generator) -> None:
        self.body.init(params, rng)
        params.add(f"{self.prefix}.log_std", np.full(self.act_dim, self.log_std_init))

    def forward(self, params: ParameterSet, obs: np.ndarray):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if obs.shape[1] != self.obs_dim:
            raise ShapeError(f"actor expects observations of width {self.obs_dim}, got {obs.shape[1]}")
        z, caches = self.body.forward(params, obs)
        mean = np.tanh(z)
        raw_log_std = params[f"{self.prefix}.log_std"]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std, (caches, mean, raw_log_std)

    def backward(self, params: ParameterSet, cache, d_mean: np.ndarray, d_log_std: np.ndarray) -> None:
        caches, mean, raw_log_std = cache
        inside = (raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX)
        params.grads[f"{self.prefix}.log_std"] += d_log_std * inside
        self.body.backward(params, caches, d_mean * (1.0 - mean * mean))

    def param_count(self) -> int:
        return self.body.param_count() + self.act_dim


class Critic:
    """Tanh MLP value function on the global state."""

    def __init__(self, state_dim: int, hidden: tuple[int, ...], prefix: str = "critic"):
        self.state_dim, self.prefix = state_dim, prefix
        layers, width = [], state_dim
        for j, h in enumerate(hidden):
            layers += [Linear(f"{prefix}.fc{j}", width, h), Tanh()]
            width = h
        layers.append(Linear(f"{prefix}.out", width, 1))
        self.body = Sequential(layers)

    def init(self, params: ParameterSet, rng: np.random.Generator) -> None:
        self.body.init(params, rng)

    def forward(self, params: ParameterSet, state: np.ndarray):
        state = np.atleast_2d(np.asarray(state, dtype=np.float64))
        if state.shape[1] != self.state_dim:
            raise ShapeError(f"critic expects states of width {self.state_dim}, got {state.shape[1]}")
        v, caches = self.body.forward(params, state)
        return v[:, 0], caches

    def backward(self, params: ParameterSet, caches, d_value: np.ndarray) -> None:
        self.body.backward(params, caches, np.asarray(d_value, dtype=np.float64)[:, None])

    def param_count(self) -> int:
        return self.body.param_count()


# ---------------------------------------------------------------------------
# squashed Gaussian


def log_one_minus_tanh_sq(u: np.ndarray) -> np.ndarray:
    """Stable ``log(1 - tanh(u)^2)``."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def gaussian_log_prob(mean, log_std, u, squash: bool = True) -> np.ndarray:
    """Log density of the action ``tanh(u)`` (or of ``u`` if ``squash=False``).

    ``u`` is the pre-squash sample, shape (B, d); returns shape (B,).
    """
    std = np.exp(log_std)
    z = (u - mean) / std
    logp = np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)
    if squash:
        logp = logp - np.sum(log_one_minus_tanh_sq(u), axis=-1)
    return logp


def gaussian_log_prob_grads(mean, log_std, u):
    """Gradients of the log density w.r.t. the mean (B, d) and log-std (B, d).

    The squashing correction depends on ``u`` only, so it drops out.
    """
    std = np.exp(log_std)
    z = (u - mean) / std
    return z / std, z * z - 1.0


def gaussian_entropy(log_std) -> float:
    """Entropy of the pre-squash Gaussian."""
    return float(np.sum(log_std + 0.5 * math.log(2.0 * math.pi * math.e)))


def gaussian_sample(mean, log_std, rng: np.random.Generator):
    """Draw ``u ~ N(mean, exp(log_std))``; returns ``(u, tanh(u), log_prob, entropy)``."""
    u = mean + np.exp(log_std) * rng.standard_normal(np.shape(mean))
    return u, np.tanh(u), gaussian_log_prob(mean, log_std, u), gaussian_entropy(log_std)
