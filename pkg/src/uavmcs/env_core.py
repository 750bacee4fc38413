"""Physical model of the multi-UAV crowdsensing network.

All functions are pure: they read explicit inputs (plus an explicit
``numpy.random.Generator`` where randomness is involved) and return new
arrays.  Shapes follow one convention throughout: per-user arrays have a
leading ``K`` axis, per-UAV arrays a leading ``U`` axis, and user/UAV pair
quantities are ``(K, U)`` matrices.  Data volumes are in bits, energies in
joules, powers in watts, frequencies in Hz.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SimConfig

logger = logging.getLogger(__name__)


@dataclass
class UserState:
    pos: np.ndarray        # (K, 3), z = 0
    speed: np.ndarray      # (K,)
    direction: np.ndarray  # (K,) radians
    o_hat: np.ndarray      # (K,) sensing rate, bits/s
    C_k: np.ndarray        # (K,) cycles/bit

    @property
    def K(self) -> int:
        return self.pos.shape[0]


@dataclass
class UavState:
    pos: np.ndarray      # (U, 3) projected position
    vel: np.ndarray      # (U, 3)
    C_u: np.ndarray      # (U,) cycles/bit
    raw_pos: np.ndarray = field(default=None)  # (U, 3) position before projection

    def __post_init__(self) -> None:
        if self.raw_pos is None:
            self.raw_pos = self.pos.copy()

    @property
    def U(self) -> int:
        return self.pos.shape[0]


@dataclass
class JointAction:
    """Decoded, feasible decisions of every agent for one slot."""

    xi1: np.ndarray      # (K,)
    xi2: np.ndarray      # (K,)
    beta: np.ndarray     # (K, U) 0/1 association
    f_k: np.ndarray      # (K,) local CPU frequency, set by the closed-form rule
    accel: np.ndarray    # (U, 3)
    B_alloc: np.ndarray  # (U, K) Hz
    f_alloc: np.ndarray  # (U, K) Hz


@dataclass
class ConstraintReport:
    """Signed slack of every constraint; ``>= 0`` means satisfied.

    ``xi`` holds ``min(xi, 1 - xi)`` which must be strictly positive.
    """

    user_energy: np.ndarray      # (K,)   E_k_max - E_k
    user_energy_lo: np.ndarray   # (K,)   E_k
    uav_energy: np.ndarray       # (U,)   E_u_max - E_u
    uav_energy_lo: np.ndarray    # (U,)   E_u
    boundary_x: np.ndarray       # (U,)   min(x, X - x) of the raw position
    boundary_y: np.ndarray       # (U,)
    altitude: np.ndarray         # (U,)   min(z - z_min, z_max - z) of the projected position
    association: np.ndarray      # (K,)   1 - sum_u beta
    bandwidth: np.ndarray        # (U,)   B_u - sum_k B
    user_freq: np.ndarray        # (K,)   min(f_k, f_k_max - f_k)
    uav_freq_each: np.ndarray    # (U, K) min(f_ku, f_u_max - f_ku)
    uav_freq_total: np.ndarray   # (U,)   f_u_max - sum_k beta f_ku
    sensing_coupling: np.ndarray  # (K,)  D_s - (D_loc + sum_u beta D_t)
    offload_coupling: np.ndarray  # (K, U) D_t - D_comp
    speed: np.ndarray            # (U,)   v_max - |v|
    accel: np.ndarray            # (U,)   a_max - |a|
    separation: np.ndarray       # (U, U) |q_u - q_u'| - d_min, +inf on the diagonal
    xi: np.ndarray               # (K, 2)

    def violations(self) -> dict[str, int]:
        """Number of violated entries per constraint group."""
        out = {}
        for name, slack in vars(self).items():
            if name == "xi":
                out[name] = int(np.sum(slack <= 0))
            else:
                out[name] = int(np.sum(slack < 0))
        return out


# ---------------------------------------------------------------------------
# initial conditions


def init_users(cfg: SimConfig, rng: np.random.Generator) -> UserState:
    K = cfg.K
    pos = np.zeros((K, 3))
    pos[:, 0] = rng.uniform(0.0, cfg.area_x_max, K)
    pos[:, 1] = rng.uniform(0.0, cfg.area_y_max, K)
    return UserState(
        pos=pos,
        speed=np.full(K, cfg.v_bar),
        direction=rng.uniform(-np.pi, np.pi, K),
        o_hat=rng.uniform(cfg.o_hat_min, cfg.o_hat_max, K),
        C_k=rng.uniform(cfg.C_k_min, cfg.C_k_max, K),
    )


def init_uavs(cfg: SimConfig, rng: np.random.Generator) -> UavState:
    U = cfg.U
    pos = np.empty((U, 3))
    pos[:, 0] = rng.uniform(0.0, cfg.area_x_max, U)
    pos[:, 1] = rng.uniform(0.0, cfg.area_y_max, U)
    pos[:, 2] = 0.5 * (cfg.z_min + cfg.z_max)
    return UavState(pos=pos, vel=np.zeros((U, 3)), C_u=rng.uniform(cfg.C_u_min, cfg.C_u_max, U))


# ---------------------------------------------------------------------------
# mobility


def step_user_mobility(state: UserState, cfg: SimConfig, rng: np.random.Generator) -> UserState:
    """Advance every user by one slot of the Gauss-Markov model.

    The position moves with the previous slot's speed and heading; speed and
    heading are then refreshed.  Positions are clamped to the area and the
    speed is floored at zero.
    """
    K = state.K
    speed_noise = cfg.sigma_speed * rng.standard_normal(K)
    dir_noise = cfg.sigma_dir * rng.standard_normal(K)

    pos = state.pos.copy()
    pos[:, 0] += state.speed * np.cos(state.direction) * cfg.delta
    pos[:, 1] += state.speed * np.sin(state.direction) * cfg.delta
    pos[:, 0] = np.clip(pos[:, 0], 0.0, cfg.area_x_max)
    pos[:, 1] = np.clip(pos[:, 1], 0.0, cfg.area_y_max)

    c1, c2 = cfg.c1, cfg.c2
    speed = c1 * state.speed + (1.0 - c1) * cfg.v_bar + np.sqrt(1.0 - c1**2) * speed_noise
    direction = c2 * state.direction + (1.0 - c2) * cfg.alpha_bar + np.sqrt(1.0 - c2**2) * dir_noise
    return replace(state, pos=pos, speed=np.maximum(speed, 0.0), direction=direction)


def step_uav_kinematics(state: UavState, accel: np.ndarray, cfg: SimConfig) -> UavState:
    """Integrate UAV motion over one slot and project onto the feasible set.

    Velocity is projected onto the ``v_max`` ball; the horizontal position is
    clamped to the area and the altitude to ``[z_min, z_max]``.  On every
    clamped axis the outward velocity component is zeroed.  The unprojected
    position is kept in ``raw_pos`` for the boundary penalty.
    """
    accel = np.asarray(accel, dtype=float).reshape(state.U, 3)
    d = cfg.delta
    raw_pos = state.pos + state.vel * d + 0.5 * accel * d * d
    vel = state.vel + accel * d
    norm = np.linalg.norm(vel, axis=1, keepdims=True)
    scale = np.where(norm > cfg.v_max, cfg.v_max * (1.0 - 1e-12) / np.maximum(norm, 1e-300), 1.0)
    vel = vel * scale

    lo = np.array([0.0, 0.0, cfg.z_min])
    hi = np.array([cfg.area_x_max, cfg.area_y_max, cfg.z_max])
    pos = np.clip(raw_pos, lo, hi)
    vel = np.where((raw_pos < lo) & (vel < 0), 0.0, vel)
    vel = np.where((raw_pos > hi) & (vel > 0), 0.0, vel)
    return replace(state, pos=pos, vel=vel, raw_pos=raw_pos)


# ---------------------------------------------------------------------------
# channel and rate


def small_scale_fading(shape, K_a: float, rng: np.random.Generator) -> np.ndarray:
    """|g_hat|^2 of a Rician channel with unit-modulus LoS phase 0 and unit mean."""
    if np.isinf(K_a):
        return np.ones(shape)
    scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    g = np.sqrt(K_a / (K_a + 1.0)) + np.sqrt(1.0 / (K_a + 1.0)) * scatter
    return np.abs(g) ** 2


def channel_power_gain(q_k: np.ndarray, q_u: np.ndarray, cfg: SimConfig,
                       rng: np.random.Generator) -> np.ndarray:
    """Channel power gain ``|g|^2`` for every user/UAV pair, shape (K, U)."""
    q_k = np.atleast_2d(q_k)
    q_u = np.atleast_2d(q_u)
    d2 = np.sum((q_k[:, None, :] - q_u[None, :, :]) ** 2, axis=-1)
    large_scale = cfg.beta0 / d2
    return large_scale * small_scale_fading(d2.shape, cfg.K_a, rng)


def transmission_rate(beta, B, gain, cfg: SimConfig) -> np.ndarray:
    """OFDMA rate ``beta * B * log2(1 + p g / (N0 B))`` in bits/s; 0 when beta or B is 0."""
    beta = np.asarray(beta, dtype=float)
    B = np.asarray(B, dtype=float)
    gain = np.asarray(gain, dtype=float)
    active = (beta > 0) & (B > 0)
    safe_B = np.where(active, B, 1.0)
    snr = cfg.p_k * gain / (cfg.N0 * safe_B)
    return np.where(active, beta * safe_B * np.log2(1.0 + snr), 0.0)


# ---------------------------------------------------------------------------
# data and energy


def data_volumes(xi1, xi2, rate, f_k, f_ku, o_hat, C_k, C_u, cfg: SimConfig):
    """Sensed, transmitted, locally computed and UAV-computed bits for one slot.

    ``rate`` and ``f_ku`` are (K, U) pair matrices, the rest are per-user
    vectors except ``C_u`` (per UAV).  Returns ``(D_s, D_t, D_loc, D_comp)``
    with ``D_t`` and ``D_comp`` of shape (K, U).  Coupling violations are
    reported raw, never clipped.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    d = cfg.delta
    D_s = xi1 * np.asarray(o_hat) * d
    D_t = ((1.0 - xi1) * xi2)[..., None] * np.asarray(rate) * d
    D_loc = np.asarray(f_k) * (1.0 - xi1) * d / np.asarray(C_k)
    comp_time = ((1.0 - xi1) * (1.0 - xi2))[..., None] * d
    D_comp = np.asarray(f_ku) * comp_time / np.asarray(C_u)
    return D_s, D_t, D_loc, D_comp


def user_energy(xi1, xi2, D_s, f_k, beta, cfg: SimConfig):
    """Per-user energy ``(E_s, E_t, E_loc, E_total)``.

    Transmission energy is charged through the association row, so an
    unscheduled user spends nothing on transmission.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    d = cfg.delta
    E_s = cfg.e_k * np.asarray(D_s)
    E_t_pair = cfg.p_k * (1.0 - xi1) * xi2 * d
    E_t = np.sum(np.asarray(beta, dtype=float), axis=-1) * E_t_pair
    E_loc = cfg.kappa * np.asarray(f_k, dtype=float) ** 3 * (1.0 - xi1) * d
    return E_s, E_t, E_loc, E_s + E_t + E_loc


def uav_flight_power(vel, cfg: SimConfig) -> np.ndarray:
    """Rotary-wing propulsion power for velocities of shape (..., 3).

    Blade-profile, induced, parasite and vertical terms.  The induced term
    ``P_i v0 / v_h^2`` of the textbook fit is singular at hover; the default
    ``guarded`` model uses ``P_i v0 / max(v_h, v0)`` which equals ``P_i`` for
    ``v_h <= v0``.  ``induced_model="literal"`` uses the literal term whenever
    ``v_h > 0`` and the guarded value at hover.  Negative totals (fast descent)
    are floored at zero.
    """
    vel = np.asarray(vel, dtype=float)
    vh2 = vel[..., 0] ** 2 + vel[..., 1] ** 2
    vh = np.sqrt(vh2)
    blade = cfg.P0 * (1.0 + 3.0 * vh2 / (cfg.Omega**2 * cfg.rotor_r**2))
    guarded = cfg.Pi * cfg.v0 / np.maximum(vh, cfg.v0)
    if cfg.induced_model == "literal":
        induced = np.where(vh > 0, cfg.Pi * cfg.v0 / np.where(vh > 0, vh2, 1.0), guarded)
    else:
        induced = guarded
    parasite = 0.5 * cfg.d0 * cfg.rho * cfg.s_solidity * cfg.A_r * vh**3
    vertical = cfg.G_weight * vel[..., 2]
    power = blade + induced + parasite + vertical
    if np.any(power < 0):
        logger.debug("negative flight power %s floored at 0", np.min(power))
        power = np.maximum(power, 0.0)
    return power


def uav_energy(flight_power, f_alloc, xi1, xi2, beta, cfg: SimConfig):
    """Per-UAV ``(E_comp, E_total)`` for one slot, both of shape (U,)."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    beta_uk = np.asarray(beta, dtype=float).T
    comp_time = (1.0 - xi1) * (1.0 - xi2) * cfg.delta
    E_comp = np.sum(beta_uk * cfg.kappa * np.asarray(f_alloc, dtype=float) ** 3 * comp_time, axis=-1)
    return E_comp, E_comp + np.asarray(flight_power) * cfg.delta


# ---------------------------------------------------------------------------
# constraints and objective


def sensing_load(D_loc, D_t, beta) -> np.ndarray:
    """``D_loc + sum_u beta D_t``: bits a user processes or ships in one slot."""
    return np.asarray(D_loc) + np.sum(np.asarray(beta) * np.asarray(D_t), axis=-1)


def evaluate_constraints(users: UserState, uavs: UavState, action: JointAction, volumes,
                         E_user, E_uav, cfg: SimConfig) -> ConstraintReport:
    """Signed slack of the energy, geometry, resource and coupling constraints.

    ``uavs`` is the state the slot was evaluated at, except ``raw_pos`` which
    must be the unprojected position reached at the end of the slot.
    """
    D_s, D_t, D_loc, D_comp = volumes
    beta = np.asarray(action.beta, dtype=float)
    raw = uavs.raw_pos
    q = uavs.pos
    diff = q[:, None, :] - q[None, :, :]
    sep = np.linalg.norm(diff, axis=-1) - cfg.d_min
    np.fill_diagonal(sep, np.inf)
    return ConstraintReport(
        user_energy=cfg.E_k_max - E_user,
        user_energy_lo=np.asarray(E_user, dtype=float).copy(),
        uav_energy=cfg.E_u_max - E_uav,
        uav_energy_lo=np.asarray(E_uav, dtype=float).copy(),
        boundary_x=np.minimum(raw[:, 0], cfg.area_x_max - raw[:, 0]),
        boundary_y=np.minimum(raw[:, 1], cfg.area_y_max - raw[:, 1]),
        altitude=np.minimum(q[:, 2] - cfg.z_min, cfg.z_max - q[:, 2]),
        association=1.0 - beta.sum(axis=1),
        bandwidth=cfg.B_u - np.sum(action.B_alloc, axis=1),
        user_freq=np.minimum(action.f_k, cfg.f_k_max - action.f_k),
        uav_freq_each=np.minimum(action.f_alloc, cfg.f_u_max - action.f_alloc),
        uav_freq_total=cfg.f_u_max - np.sum(beta.T * action.f_alloc, axis=1),
        sensing_coupling=D_s - sensing_load(D_loc, D_t, beta),
        offload_coupling=D_t - D_comp,
        speed=cfg.v_max - np.linalg.norm(uavs.vel, axis=1),
        accel=cfg.a_max - np.linalg.norm(action.accel, axis=1),
        separation=sep,
        xi=np.minimum(np.stack([action.xi1, action.xi2], axis=1),
                      1.0 - np.stack([action.xi1, action.xi2], axis=1)),
    )


def processed_data_objective(D_loc, D_comp, beta) -> float:
    """Association-weighted processed bits ``sum_u sum_k beta (D_loc + D_comp)``."""
    beta = np.asarray(beta, dtype=float)
    return float(np.sum(beta * (np.asarray(D_loc)[:, None] + np.asarray(D_comp))))


def capped_processed_data(D_s, D_t, D_loc, D_comp, beta) -> np.ndarray:
    """Per-user processed bits counted only up to what is feasible.

    UAV-side bits are capped by what was transmitted, and the user total by
    what was sensed.  Local computation counts whether or not the user was
    scheduled.
    """
    beta = np.asarray(beta, dtype=float)
    remote = np.sum(beta * np.minimum(D_comp, D_t), axis=-1)
    return np.minimum(np.asarray(D_loc) + remote, np.asarray(D_s))
