"""Multi-agent decision process built on :mod:`uavmcs.env_core`.

Agents ``0..K-1`` are users, agents ``K..K+U-1`` are UAVs.  Raw policy
outputs live in ``[-1, 1]^d`` and are decoded into feasible
:class:`~uavmcs.env_core.JointAction` objects; the local CPU frequency of
each user is not learned but set by :func:`optimal_user_frequency`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env_core as ec
from .config import SimConfig

# constant feature scales for the non-positional observation entries
USER_ENERGY_SCALE = 1.0
UAV_ENERGY_SCALE = 1e-3


@dataclass
class World:
    users: ec.UserState
    uavs: ec.UavState
    slot: int = 0


@dataclass
class RewardBreakdown:
    user_goal: np.ndarray
    user_energy: np.ndarray
    user_coupling: np.ndarray
    user_offload: np.ndarray
    uav_goal: np.ndarray
    uav_energy: np.ndarray
    uav_offload: np.ndarray
    uav_boundary: np.ndarray
    uav_collision: np.ndarray

    @property
    def user_total(self) -> np.ndarray:
        return self.user_goal + self.user_energy + self.user_coupling + self.user_offload

    @property
    def uav_total(self) -> np.ndarray:
        return (self.uav_goal + self.uav_energy + self.uav_offload
                + self.uav_boundary + self.uav_collision)

    def per_agent(self) -> np.ndarray:
        return np.concatenate([self.user_total, self.uav_total])


@dataclass
class SlotEvaluation:
    action: ec.JointAction
    gain: np.ndarray
    rate: np.ndarray
    D_s: np.ndarray
    D_t: np.ndarray
    D_loc: np.ndarray
    D_comp: np.ndarray
    E_s: np.ndarray
    E_t: np.ndarray
    E_loc: np.ndarray
    E_user: np.ndarray
    flight_power: np.ndarray
    E_uav_comp: np.ndarray
    E_uav: np.ndarray
    constraints: ec.ConstraintReport
    rewards: RewardBreakdown
    objective: float
    processed: np.ndarray  # (K,) feasibility-capped processed bits

    @property
    def volumes(self):
        return self.D_s, self.D_t, self.D_loc, self.D_comp


# ---------------------------------------------------------------------------
# observations


def _norm_pos(pos: np.ndarray, cfg: SimConfig) -> np.ndarray:
    return pos / np.array([cfg.area_x_max, cfg.area_y_max, cfg.z_max])


def build_observations(world: World, cfg: SimConfig):
    """Per-agent observations and the global state.

    User rows: ``[q_k, E_k_max, o_hat_k, q_1..q_U]``; UAV rows:
    ``[q_u, q_{-u}, E_u_max, q_1..q_K]``.  Positions are divided by the area
    extents and ``z_max``.  Returns ``(user_obs, uav_obs, state)``.
    """
    users, uavs = world.users, world.uavs
    K, U = users.K, uavs.U
    qk = _norm_pos(users.pos, cfg)
    qu = _norm_pos(uavs.pos, cfg)

    user_obs = np.empty((K, 5 + 3 * U))
    user_obs[:, 0:3] = qk
    user_obs[:, 3] = cfg.E_k_max * USER_ENERGY_SCALE
    user_obs[:, 4] = users.o_hat / cfg.o_hat_max
    user_obs[:, 5:] = qu.reshape(-1)

    uav_obs = np.empty((U, 4 + 3 * (U - 1) + 3 * K))
    flat_users = qk.reshape(-1)
    for u in range(U):
        others = np.delete(qu, u, axis=0).reshape(-1)
        uav_obs[u] = np.concatenate([qu[u], others, [cfg.E_u_max * UAV_ENERGY_SCALE], flat_users])

    state = np.concatenate([user_obs.reshape(-1), uav_obs.reshape(-1)])
    return user_obs, uav_obs, state


# ---------------------------------------------------------------------------
# action decoding


def decode_user_action(raw: np.ndarray, cfg: SimConfig):
    """Map raw user outputs (..., 2+U) to ``(xi1, xi2, beta)``.

    Each partition variable is the affine image of its raw entry, kept
    ``xi_eps`` away from 0 and 1.  The user is associated with the UAV whose
    score is largest (lowest index on ties) iff that score is positive.
    """
    raw = np.asarray(raw, dtype=float)
    eps = cfg.xi_eps
    xi1 = np.clip(0.5 * (raw[..., 0] + 1.0), eps, 1.0 - eps)
    xi2 = np.clip(0.5 * (raw[..., 1] + 1.0), eps, 1.0 - eps)
    scores = raw[..., 2:]
    best = np.argmax(scores, axis=-1)
    top = np.take_along_axis(scores, best[..., None], axis=-1)[..., 0]
    beta = np.zeros_like(scores)
    np.put_along_axis(beta, best[..., None], 1.0, axis=-1)
    beta *= (top > 0)[..., None]
    return xi1, xi2, beta


def _share(scores: np.ndarray, mask: np.ndarray, total: float) -> np.ndarray:
    """Split ``total`` among masked entries with softmax weights; never exceeds it."""
    masked = np.where(mask, scores, -np.inf)
    top = np.max(masked, axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.where(mask, np.exp(scores - top), 0.0)
    denom = np.sum(w, axis=-1, keepdims=True)
    share = np.divide(w, denom, out=np.zeros_like(w), where=denom > 0)
    # shave a relative 1e-12 so summation rounding can never exceed the budget
    return share * (total * (1.0 - 1e-12))


def decode_uav_action(raw: np.ndarray, beta: np.ndarray, cfg: SimConfig):
    """Map raw UAV outputs (U, 3+2K) to ``(accel, B_alloc, f_alloc)``.

    Acceleration is scaled into the ``a_max`` ball; bandwidth and CPU are
    shared among the UAV's associated users by softmax weights.
    """
    raw = np.asarray(raw, dtype=float)
    K = beta.shape[0]
    a = raw[:, :3]
    a_norm = np.linalg.norm(a, axis=1, keepdims=True)
    accel = cfg.a_max * a / np.maximum(1.0, a_norm * (1.0 + 1e-12))
    mask = np.asarray(beta, dtype=float).T > 0
    B_alloc = _share(raw[:, 3:3 + K], mask, cfg.B_u)
    f_alloc = np.minimum(_share(raw[:, 3 + K:3 + 2 * K], mask, cfg.f_u_max), cfg.f_u_max)
    return accel, B_alloc, f_alloc


# ---------------------------------------------------------------------------
# penalties, closed-form frequency and rewards


def penalty_F(x, a, b):
    """``-|x - clip(x, a, b)|``: zero inside ``[a, b]``, minus the distance outside."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a > b):
        raise ValueError("penalty interval requires a <= b")
    out = -np.abs(x - np.minimum(np.maximum(x, a), b))
    return out if out.ndim else float(out)


def optimal_user_frequency(D_s, D_t_sent, E_s, E_t_sent, xi1, C_k, cfg: SimConfig):
    """Largest local CPU frequency that respects the sensing and energy budgets.

    ``D_t_sent`` and ``E_t_sent`` are the association-weighted transmitted
    bits and transmit energy.  The bit budget bounds the frequency linearly,
    the energy residual through a cube root; a negative residual gives 0.
    """
    xi1 = np.asarray(xi1, dtype=float)
    busy = (1.0 - xi1) * cfg.delta
    f_data = (np.asarray(D_s) - np.asarray(D_t_sent)) * np.asarray(C_k) / busy
    residual = cfg.E_k_max - np.asarray(E_s) - np.asarray(E_t_sent)
    f_energy = np.cbrt(np.maximum(residual, 0.0) / (cfg.kappa * busy))
    return np.maximum(0.0, np.minimum(np.minimum(cfg.f_k_max, f_data), f_energy))


def compute_rewards(ev: SlotEvaluation, uavs: ec.UavState, cfg: SimConfig) -> RewardBreakdown:
    """Goal-plus-penalty rewards for every agent of one evaluated slot.

    Data quantities enter in ``data_scale`` units (megabits by default);
    the boundary penalty is measured in ``boundary_norm`` metres.
    """
    s = cfg.data_scale
    beta = ev.action.beta
    D_t_sent = np.sum(beta * ev.D_t, axis=1)
    comp_user = np.sum(beta * ev.D_comp, axis=1)

    user_goal = s * (ev.D_loc + comp_user)
    user_energy = cfg.mu_e * penalty_F(ev.E_user, 0.0, cfg.E_k_max)
    user_coupling = cfg.mu_c * s * penalty_F(ec.sensing_load(ev.D_loc, ev.D_t, beta), 0.0, ev.D_s)
    user_offload = cfg.mu_t * s * penalty_F(np.sum(ev.D_comp, axis=1), 0.0, D_t_sent)

    uav_goal = s * np.sum(beta * (ev.D_loc[:, None] + ev.D_comp), axis=0)
    uav_energy = cfg.mu_bar_e * penalty_F(ev.E_uav, 0.0, cfg.E_u_max)
    uav_offload = cfg.mu_bar_t * s * np.sum(penalty_F(ev.D_comp, 0.0, ev.D_t), axis=0)
    raw = uavs.raw_pos
    uav_boundary = cfg.mu_bar_r / cfg.boundary_norm * (
        penalty_F(raw[:, 0], 0.0, cfg.area_x_max) + penalty_F(raw[:, 1], 0.0, cfg.area_y_max))
    dist = np.linalg.norm(uavs.pos[:, None, :] - uavs.pos[None, :, :], axis=-1)
    pair = penalty_F(dist, cfg.d_min, np.inf)
    np.fill_diagonal(pair, 0.0)
    uav_collision = cfg.mu_bar_c * np.sum(pair, axis=1)
    return RewardBreakdown(
        user_goal=user_goal, user_energy=user_energy, user_coupling=user_coupling,
        user_offload=user_offload, uav_goal=uav_goal, uav_energy=uav_energy,
        uav_offload=uav_offload, uav_boundary=uav_boundary, uav_collision=uav_collision,
    )


# ---------------------------------------------------------------------------
# one slot


def evaluate_slot(world: World, raw_user: np.ndarray, raw_uav: np.ndarray, cfg: SimConfig,
                  fading_rng: np.random.Generator):
    """Decode, simulate and score one slot; returns ``(evaluation, next_uavs)``."""
    users, uavs = world.users, world.uavs
    xi1, xi2, beta = decode_user_action(raw_user, cfg)
    accel, B_alloc, f_alloc = decode_uav_action(raw_uav, beta, cfg)

    gain = ec.channel_power_gain(users.pos, uavs.pos, cfg, fading_rng)
    rate = ec.transmission_rate(beta, B_alloc.T, gain, cfg)
    D_s, D_t, _, _ = ec.data_volumes(xi1, xi2, rate, 0.0, f_alloc.T, users.o_hat,
                                     users.C_k, uavs.C_u, cfg)
    E_s, E_t, _, _ = ec.user_energy(xi1, xi2, D_s, 0.0, beta, cfg)
    f_k = optimal_user_frequency(D_s, np.sum(beta * D_t, axis=1), E_s, E_t, xi1, users.C_k, cfg)
    action = ec.JointAction(xi1=xi1, xi2=xi2, beta=beta, f_k=f_k, accel=accel,
                            B_alloc=B_alloc, f_alloc=f_alloc)

    D_s, D_t, D_loc, D_comp = ec.data_volumes(xi1, xi2, rate, f_k, f_alloc.T, users.o_hat,
                                              users.C_k, uavs.C_u, cfg)
    E_s, E_t, E_loc, E_user = ec.user_energy(xi1, xi2, D_s, f_k, beta, cfg)
    power = ec.uav_flight_power(uavs.vel, cfg)
    E_uav_comp, E_uav = ec.uav_energy(power, f_alloc, xi1, xi2, beta, cfg)

    next_uavs = ec.step_uav_kinematics(uavs, accel, cfg)
    slot_uavs = ec.UavState(pos=uavs.pos, vel=uavs.vel, C_u=uavs.C_u, raw_pos=next_uavs.raw_pos)
    volumes = (D_s, D_t, D_loc, D_comp)
    report = ec.evaluate_constraints(users, slot_uavs, action, volumes, E_user, E_uav, cfg)

    ev = SlotEvaluation(
        action=action, gain=gain, rate=rate, D_s=D_s, D_t=D_t, D_loc=D_loc, D_comp=D_comp,
        E_s=E_s, E_t=E_t, E_loc=E_loc, E_user=E_user, flight_power=power,
        E_uav_comp=E_uav_comp, E_uav=E_uav, constraints=report, rewards=None,
        objective=ec.processed_data_objective(D_loc, D_comp, beta),
        processed=ec.capped_processed_data(D_s, D_t, D_loc, D_comp, beta),
    )
    ev.rewards = compute_rewards(ev, slot_uavs, cfg)
    return ev, next_uavs


def env_step(world: World, raw_user: np.ndarray, raw_uav: np.ndarray, cfg: SimConfig,
             fading_rng: np.random.Generator, mobility_rng: np.random.Generator):
    """Advance the world by one slot.

    Returns ``(next_world, (user_obs, uav_obs, state), rewards, evaluation)``
    where ``rewards`` is the per-agent vector (users first).
    """
    ev, next_uavs = evaluate_slot(world, raw_user, raw_uav, cfg, fading_rng)
    next_users = ec.step_user_mobility(world.users, cfg, mobility_rng)
    nxt = World(users=next_users, uavs=next_uavs, slot=world.slot + 1)
    return nxt, build_observations(nxt, cfg), ev.rewards.per_agent(), ev


def reset_world(cfg: SimConfig, rng: np.random.Generator) -> World:
    return World(users=ec.init_users(cfg, rng), uavs=ec.init_uavs(cfg, rng), slot=0)


class CrowdsensingEnv:
    """Stateful episode wrapper around :func:`env_step` with its own streams."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.world: World | None = None
        self._fading = None
        self._mobility = None

    def reset(self, scenario_rng, fading_rng, mobility_rng):
        self.world = reset_world(self.cfg, scenario_rng)
        self._fading = fading_rng
        self._mobility = mobility_rng
        return build_observations(self.world, self.cfg)

    @property
    def done(self) -> bool:
        return self.world is not None and self.world.slot >= self.cfg.N

    def step(self, raw_user, raw_uav):
        if self.world is None:
            raise RuntimeError("reset() must be called before step()")
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        self.world, obs, rewards, ev = env_step(
            self.world, raw_user, raw_uav, self.cfg, self._fading, self._mobility)
        return obs, rewards, self.done, ev
