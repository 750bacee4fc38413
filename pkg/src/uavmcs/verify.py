"""Finite-difference verification of every hand-written gradient.

Each check draws a small random network, batch and loss, then compares the
analytic gradient (parameters and, for layers, the input) against central
differences.  ``run_gradcheck`` repeats every check over many draws and
returns one merged report per component.
"""

from __future__ import annotations

import numpy as np

from .config import NetworkConfig
from .happo import actor_loss, critic_loss
from .nn import Actor, Conv1d, ConvSpec, Critic, KANLayer, KanLayerSpec, ParameterSet
from .nn.gradcheck import GradCheckReport, check_gradients
from .nn.policy import gaussian_log_prob, gaussian_log_prob_grads


def _layer_check(name, layer, x, rng, tolerance):
    params = ParameterSet()
    layer.init(params, rng)
    # perturb the defaults so no parameter sits at a special value
    for n in params.names():
        params[n][...] += rng.normal(0.0, 0.3, params[n].shape)
    params.add("input", x)
    y, _ = layer.forward(params, x)
    proj = rng.normal(size=y.shape)

    def loss():
        out, _ = layer.forward(params, params["input"])
        return float(np.sum(np.tanh(out) * proj))

    def loss_and_grad():
        out, cache = layer.forward(params, params["input"])
        t = np.tanh(out)
        params.grads["input"] += layer.backward(params, cache, proj * (1.0 - t * t))
        return float(np.sum(t * proj))

    return check_gradients(name, params, loss, loss_and_grad, tolerance)


def check_conv(rng, tolerance=1e-4) -> GradCheckReport:
    c_in, c_out = rng.integers(1, 3), rng.integers(1, 4)
    k, stride = rng.integers(1, 4), rng.integers(1, 3)
    length = int(rng.integers(k + 1, k + 7))
    layer = Conv1d("conv", ConvSpec(int(c_in), int(c_out), int(k), int(stride)), length)
    x = rng.normal(size=(int(rng.integers(1, 4)), int(c_in), length))
    return _layer_check("conv", layer, x, rng, tolerance)


def check_kan(rng, tolerance=1e-4) -> GradCheckReport:
    spec = KanLayerSpec(int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                        grid_size=int(rng.integers(2, 6)), spline_order=int(rng.integers(1, 4)),
                        grid_range=float(rng.uniform(1.0, 2.5)))
    layer = KANLayer("kan", spec)
    # keep inputs away from knots, where lower-order splines have kinks
    h = 2.0 * spec.grid_range / spec.grid_size
    cells = rng.integers(0, spec.grid_size, size=(int(rng.integers(1, 4)), spec.in_width))
    x = -spec.grid_range + h * (cells + rng.uniform(0.05, 0.95, cells.shape))
    return _layer_check("kan", layer, x, rng, tolerance)


def check_critic_mlp(rng, tolerance=1e-4) -> GradCheckReport:
    dim = int(rng.integers(2, 6))
    critic = Critic(dim, (int(rng.integers(2, 6)), int(rng.integers(2, 6))))
    params = ParameterSet()
    critic.init(params, rng)
    states = rng.normal(size=(int(rng.integers(2, 6)), dim))
    w = rng.normal(size=states.shape[0])

    def loss():
        return float(np.dot(critic.forward(params, states)[0], w))

    def loss_and_grad():
        v, caches = critic.forward(params, states)
        critic.backward(params, caches, w)
        return float(np.dot(v, w))

    return check_gradients("critic_mlp", params, loss, loss_and_grad, tolerance)


def check_gaussian_log_prob(rng, tolerance=1e-4) -> GradCheckReport:
    b, d = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    params = ParameterSet()
    params.add("mean", rng.uniform(-0.9, 0.9, (b, d)))
    params.add("log_std", rng.uniform(-2.0, 0.5, d))
    u = params["mean"] + np.exp(params["log_std"]) * rng.normal(size=(b, d))
    w = rng.normal(size=b)

    def loss():
        return float(np.dot(gaussian_log_prob(params["mean"], params["log_std"], u), w))

    def loss_and_grad():
        g_mean, g_ls = gaussian_log_prob_grads(params["mean"], params["log_std"], u)
        params.grads["mean"] += w[:, None] * g_mean
        params.grads["log_std"] += np.sum(w[:, None] * g_ls, axis=0)
        return loss()

    return check_gradients("gaussian_log_prob", params, loss, loss_and_grad, tolerance)


def _tiny_net(rng) -> NetworkConfig:
    return NetworkConfig(conv_channels=(2, 2), conv_kernels=(2, 2), conv_strides=(1, 2), hidden=3,
                         kan_grid=int(rng.integers(2, 5)), kan_order=3, kan_range=2.0,
                         critic_hidden=(4, 4))


def check_actor_loss(rng, tolerance=1e-4, variant: str | None = None) -> GradCheckReport:
    variant = variant or ("ckan", "cnn", "mlp")[int(rng.integers(3))]
    obs_dim, act_dim, batch = int(rng.integers(5, 8)), int(rng.integers(1, 3)), int(rng.integers(2, 6))
    actor = Actor(variant, obs_dim, act_dim, _tiny_net(rng))
    params = ParameterSet()
    actor.init(params, rng)
    params[actor.prefix + ".log_std"][...] = rng.uniform(-1.5, 0.0, act_dim)
    obs = rng.normal(size=(batch, obs_dim))
    mean, log_std, _ = actor.forward(params, obs)
    u = mean + np.exp(log_std) * rng.normal(size=mean.shape)
    # behaviour policy slightly off the current one so some samples clip
    old_logp = gaussian_log_prob(mean, log_std, u) + rng.normal(0.0, 0.3, batch)
    adv = rng.normal(size=batch)
    eps, psi = 0.2, float(rng.uniform(0.0, 0.05))

    def loss():
        return actor_loss(actor, params, obs, u, old_logp, adv, eps, psi, backward=False)[0]

    def loss_and_grad():
        return actor_loss(actor, params, obs, u, old_logp, adv, eps, psi)[0]

    return check_gradients(f"actor_loss[{variant}]", params, loss, loss_and_grad, tolerance)


def check_critic_loss(rng, tolerance=1e-4) -> GradCheckReport:
    dim = int(rng.integers(2, 6))
    critic = Critic(dim, (int(rng.integers(2, 5)), int(rng.integers(2, 5))))
    params = ParameterSet()
    critic.init(params, rng)
    states = rng.normal(size=(int(rng.integers(2, 6)), dim))
    targets = rng.normal(size=states.shape[0])
    return check_gradients(
        "critic_loss", params,
        lambda: critic_loss(critic, params, states, targets, backward=False),
        lambda: critic_loss(critic, params, states, targets), tolerance)


CHECKS = {
    "conv": check_conv,
    "kan": check_kan,
    "critic_mlp": check_critic_mlp,
    "gaussian_log_prob": check_gaussian_log_prob,
    "actor_loss": check_actor_loss,
    "critic_loss": check_critic_loss,
}


def run_gradcheck(draws: int = 100, seed: int = 0, tolerance: float = 1e-4,
                  checks=None) -> list[GradCheckReport]:
    """Run every check ``draws`` times; returns one worst-case report per check."""
    reports = []
    for j, name in enumerate(checks or CHECKS):
        rng = np.random.default_rng([seed, j])
        merged = GradCheckReport(name, tolerance, draws=draws)
        for _ in range(draws):
            rep = CHECKS[name](rng, tolerance)
            merged.errors[rep.name] = max(merged.errors.get(rep.name, 0.0), rep.max_error)
        reports.append(merged)
    return reports
