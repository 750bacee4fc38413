"""Configuration schema for the simulator and the training harness.

Every physical, economic and learning constant lives in :class:`SimConfig`.
:class:`ExperimentConfig` wraps it together with the training schedule.
Both load from YAML files; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

VARIANTS = ("ckan", "cnn", "mlp")


class ConfigError(ValueError):
    """Raised for malformed configuration files, keys or values."""


@dataclass
class SimConfig:
    # geometry and horizon
    area_x_max: float = 500.0
    area_y_max: float = 500.0
    z_min: float = 100.0
    z_max: float = 300.0
    K: int = 4
    U: int = 2
    N: int = 10
    delta: float = 1.0

    # Gauss-Markov user mobility
    c1: float = 0.8
    c2: float = 0.8
    v_bar: float = 1.0
    alpha_bar: float = 0.0
    sigma_speed: float = 0.3
    sigma_dir: float = 0.2

    # channel and communication
    beta0: float = 1e-3
    K_a: float = 3.0
    N0: float = 1e-17
    p_k: float = 0.1
    B_u: float = 10e6

    # sensing and computing; per-entity values are drawn uniformly per episode
    o_hat_min: float = 5e6
    o_hat_max: float = 10e6
    C_k_min: float = 100.0
    C_k_max: float = 500.0
    C_u_min: float = 100.0
    C_u_max: float = 500.0
    f_k_max: float = 1e9
    f_u_max: float = 8e9

    # energy
    e_k: float = 1e-8
    kappa: float = 1e-28
    E_k_max: float = 0.5
    E_u_max: float = 250.0

    # UAV kinematics
    v_max: float = 30.0
    a_max: float = 3.0
    d_min: float = 50.0

    # rotary-wing flight power
    P0: float = 79.86
    Pi: float = 88.63
    Omega: float = 300.0
    rotor_r: float = 0.4
    d0: float = 0.6
    rho: float = 1.225
    s_solidity: float = 0.05
    A_r: float = 0.503
    v0: float = 3.6
    G_weight: float = 20.0
    induced_model: str = "guarded"

    # reward shaping
    mu_e: float = 10.0
    mu_c: float = 1.0
    mu_t: float = 1.0
    mu_bar_e: float = 10.0
    mu_bar_t: float = 1.0
    mu_bar_r: float = 1.0
    mu_bar_c: float = 1.0
    boundary_norm: float = 100.0
    data_scale: float = 1e-6
    xi_eps: float = 1e-3

    # learning
    gamma: float = 0.99
    lam: float = 0.95
    epsilon_clip: float = 0.2
    psi_entropy: float = 0.01
    l_a: float = 3e-4
    l_c: float = 1e-3

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        problems = []
        if not self.delta > 0:
            problems.append("delta must be > 0")
        if not 0 < self.z_min <= self.z_max:
            problems.append("need 0 < z_min <= z_max")
        for name in ("c1", "c2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        for name in ("K", "U", "N"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be >= 1")
        positive = (
            "area_x_max", "area_y_max", "beta0", "N0", "p_k", "B_u", "o_hat_min",
            "o_hat_max", "C_k_min", "C_k_max", "C_u_min", "C_u_max", "f_k_max",
            "f_u_max", "e_k", "kappa", "E_k_max", "E_u_max", "v_max", "a_max",
            "P0", "Pi", "Omega", "rotor_r", "v0", "boundary_norm", "data_scale",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        for lo, hi in (("o_hat_min", "o_hat_max"), ("C_k_min", "C_k_max"), ("C_u_min", "C_u_max")):
            if getattr(self, lo) > getattr(self, hi):
                problems.append(f"{lo} must not exceed {hi}")
        if self.K_a < 0:
            problems.append("K_a must be >= 0")
        if self.d_min < 0:
            problems.append("d_min must be >= 0")
        for name in ("gamma", "lam"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if not 0.0 < self.epsilon_clip < 1.0:
            problems.append("epsilon_clip must lie in (0, 1)")
        if not 0.0 < self.xi_eps < 0.5:
            problems.append("xi_eps must lie in (0, 0.5)")
        if self.induced_model not in ("guarded", "literal"):
            problems.append("induced_model must be 'guarded' or 'literal'")
        for f in fields(self):
            v = getattr(self, f.name)
            # K_a = inf is the pure line-of-sight limit
            if isinstance(v, float) and not math.isfinite(v) and not (f.name == "K_a" and v > 0):
                problems.append(f"{f.name} must be finite")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def user_obs_dim(self) -> int:
        return 5 + 3 * self.U

    @property
    def uav_obs_dim(self) -> int:
        return 4 + 3 * (self.U - 1) + 3 * self.K

    @property
    def user_action_dim(self) -> int:
        return 2 + self.U

    @property
    def uav_action_dim(self) -> int:
        return 3 + 2 * self.K

    @property
    def global_state_dim(self) -> int:
        return self.K * self.user_obs_dim + self.U * self.uav_obs_dim

    @property
    def n_agents(self) -> int:
        return self.K + self.U


@dataclass
class NetworkConfig:
    """Actor/critic topology shared by every agent of a run."""

    conv_channels: tuple[int, ...] = (8, 8)
    conv_kernels: tuple[int, ...] = (3, 3)
    conv_strides: tuple[int, ...] = (1, 2)
    hidden: int = 64
    kan_grid: int = 5
    kan_order: int = 3
    kan_range: float = 2.0
    critic_hidden: tuple[int, ...] = (128, 128)
    log_std_init: float = -0.5

    def __post_init__(self) -> None:
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.conv_kernels = tuple(int(c) for c in self.conv_kernels)
        self.conv_strides = tuple(int(c) for c in self.conv_strides)
        self.critic_hidden = tuple(int(c) for c in self.critic_hidden)
        if not len(self.conv_channels) == len(self.conv_kernels) == len(self.conv_strides):
            raise ConfigError("conv_channels, conv_kernels and conv_strides must have equal length")
        if self.kan_grid < 2 or self.kan_order < 0 or self.kan_range <= 0:
            raise ConfigError("kan_grid >= 2, kan_order >= 0 and kan_range > 0 required")


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    net: NetworkConfig = field(default_factory=NetworkConfig)
    variant: str = "ckan"
    max_episodes: int = 2000
    episode_length: int = 10
    ppo_epochs: int = 5
    episodes_per_update: int = 8
    n_minibatches: int = 4
    max_grad_norm: float = 0.5
    eval_every: int = 200
    eval_episodes: int = 5
    baseline_episodes: int = 100
    record_wallclock: bool = False
    workers: int = 1
    output_dir: str = "runs/default"
    seed: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.episode_length != self.sim.N:
            raise ConfigError(
                f"episode_length ({self.episode_length}) must equal sim.N ({self.sim.N})"
            )
        if self.max_episodes < 0:
            raise ConfigError("max_episodes must be >= 0")
        for name in ("ppo_epochs", "episodes_per_update", "n_minibatches", "eval_every",
                     "eval_episodes", "workers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.baseline_episodes < 0:
            raise ConfigError("baseline_episodes must be >= 0")
        if self.max_grad_norm <= 0:
            raise ConfigError("max_grad_norm must be > 0")

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["net"] = {k: list(v) if isinstance(v, tuple) else v for k, v in out["net"].items()}
        return out


_SECTIONS = {"sim": SimConfig, "net": NetworkConfig}


def _coerce(value: Any, current: Any, key: str) -> Any:
    """Convert ``value`` to the type of the field's current value."""
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered in ("true", "1", "yes"):
                    return True
                if lowered in ("false", "0", "no"):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(current, int):
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError(value)
            return int(as_float)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            if isinstance(value, str):
                value = [v for v in value.replace("[", "").replace("]", "").split(",") if v.strip()]
            return tuple(type(current[0])(float(v)) if current else v for v in value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def _build(cls, data: dict[str, Any], prefix: str):
    names = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}{key} must be a mapping")
            kwargs[key] = _build(_SECTIONS[key], value, f"{prefix}{key}.")
            continue
        f = names[key]
        current = f.default if f.default is not dataclasses.MISSING else None
        kwargs[key] = _coerce(value, current, prefix + key) if current is not None else value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any] | None) -> ExperimentConfig:
    data = dict(data or {})
    # Episode length defaults to the horizon so that overriding sim.N alone stays valid.
    sim_n = (data.get("sim") or {}).get("N")
    if sim_n is not None and "episode_length" not in data:
        data["episode_length"] = sim_n
    return _build(ExperimentConfig, data, "")


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load a YAML config file and apply ``key.sub=value`` overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must contain a mapping at top level")
        data = loaded
    for item in overrides or []:
        apply_override(data, item)
    return config_from_dict(data)


def apply_override(data: dict[str, Any], item: str) -> None:
    """Apply one dotted ``a.b=value`` override in place (validated on build)."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value: {item!r}")
    key, raw = item.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty override key in {item!r}")
    cls = ExperimentConfig
    node = data
    for depth, part in enumerate(parts):
        names = {f.name for f in fields(cls)}
        if part not in names:
            raise ConfigError(f"unknown config key: {'.'.join(parts[: depth + 1])}")
        if depth == len(parts) - 1:
            if part in _SECTIONS:
                raise ConfigError(f"cannot override whole section {part!r}")
            value = yaml.safe_load(raw) if raw.strip() else None
            node[part] = raw if value is None else value
            return
        if part not in _SECTIONS:
            raise ConfigError(f"{part!r} is not a config section")
        cls = _SECTIONS[part]
        node = node.setdefault(part, {})


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))


def with_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    data = cfg.to_dict()
    if not any(o.split("=", 1)[0].strip() == "episode_length" for o in overrides):
        data.pop("episode_length")
    for item in overrides:
        apply_override(data, item)
    return config_from_dict(data)
