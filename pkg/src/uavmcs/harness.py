"""Training, evaluation and experiment orchestration.

Episodes are simulated in lock-step groups of ``episodes_per_update`` so each
actor runs one batched forward pass per slot.  Every random draw comes from a
counter-based stream of the master seed (see :mod:`uavmcs.rng`); environment
streams depend only on the seed and the episode index, so the three actor
variants see identical scenarios.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import time
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import rng as streams
from .config import ExperimentConfig, SimConfig, with_overrides
from .happo import Agent, AgentBatch, RolloutBuffer, compute_gae, sequential_update_round
from .nn import Actor, Critic, ParameterSet
from .nn import checkpoint as ckpt
from .nn.layers import Conv1d, KANLayer, Linear, ShapeError
from .nn.policy import gaussian_sample
from .pomdp import CrowdsensingEnv

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["episode", "mean_user_reward", "mean_uav_reward", "processed_Mbits",
                  "energy_violations", "boundary_violations", "collision_violations", "wallclock_s"]
REWARD_COLUMNS = ["episode", "total_reward", "mean_user_reward", "mean_uav_reward",
                  "processed_Mbits"]


class CheckpointMismatch(ValueError):
    pass


@dataclass
class MetricsRow:
    episode: int
    mean_user_reward: float
    mean_uav_reward: float
    processed_Mbits: float
    energy_violations: int
    boundary_violations: int
    collision_violations: int
    wallclock_s: float = 0.0


@dataclass
class EpisodeStats:
    """Per-episode aggregates of one lock-step group, arrays of shape (E,)."""

    total_reward: np.ndarray
    user_reward: np.ndarray
    uav_reward: np.ndarray
    processed_bits: np.ndarray
    uav_bits: np.ndarray
    sensed_bits: np.ndarray
    energy_violations: np.ndarray
    boundary_violations: np.ndarray
    collision_violations: np.ndarray


@dataclass
class Rollout:
    user_obs: np.ndarray   # (N, E, K, du)
    uav_obs: np.ndarray    # (N, E, U, dv)
    states: np.ndarray     # (N, E, G)
    rewards: np.ndarray    # (N, E, K+U)
    u: list                # per agent (N, E, act_dim)
    logp: np.ndarray       # (N, E, K+U)
    stats: EpisodeStats


@dataclass
class TrainingResult:
    agents: list[Agent]
    metrics: list[MetricsRow]
    rewards: list[dict]
    baseline: dict
    output_dir: Path | None = None
    update_stats: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# agents


def build_agents(cfg: ExperimentConfig, seed: int | None = None) -> list[Agent]:
    """Fresh actor/critic pairs for every agent, initialised from the INIT stream."""
    seed = cfg.seed if seed is None else seed
    sim = cfg.sim
    agents = []
    for i in range(sim.n_agents):
        kind = "user" if i < sim.K else "uav"
        obs_dim = sim.user_obs_dim if kind == "user" else sim.uav_obs_dim
        act_dim = sim.user_action_dim if kind == "user" else sim.uav_action_dim
        actor = Actor(cfg.variant, obs_dim, act_dim, cfg.net)
        critic = Critic(sim.global_state_dim, cfg.net.critic_hidden)
        ap, cp = ParameterSet(), ParameterSet()
        actor.init(ap, streams.stream(seed, streams.INIT, i, 0))
        critic.init(cp, streams.stream(seed, streams.INIT, i, 1))
        agents.append(Agent(i, kind, actor, critic, ap, cp))
    return agents


def training_env_streams(seed: int, episode: int):
    return (streams.stream(seed, streams.SCENARIO, episode),
            streams.stream(seed, streams.FADING, episode),
            streams.stream(seed, streams.MOBILITY, episode))


def eval_env_streams(seed: int, episode: int):
    return tuple(streams.stream(seed, streams.EVAL, episode, j) for j in range(3))


# ---------------------------------------------------------------------------
# policies: callables (user_obs (E,K,du), uav_obs (E,U,dv)) -> (raw_user, raw_uav, u, logp)


def sampling_policy(agents: list[Agent], rng: np.random.Generator, greedy: bool = False):
    def act(user_obs, uav_obs):
        E, K = user_obs.shape[:2]
        U = uav_obs.shape[1]
        raw_user = np.empty((E, K, agents[0].actor.act_dim))
        raw_uav = np.empty((E, U, agents[-1].actor.act_dim))
        us, logps = [], np.zeros((E, K + U))
        for agent in agents:
            if agent.kind == "user":
                obs, k = user_obs[:, agent.index], agent.index
            else:
                k = agent.index - K
                obs = uav_obs[:, k]
            mean, log_std, _ = agent.actor.forward(agent.actor_params, obs)
            if greedy:
                u = mean
                a = np.tanh(mean)
            else:
                u, a, logp, _ = gaussian_sample(mean, log_std, rng)
                logps[:, agent.index] = logp
            us.append(u)
            if agent.kind == "user":
                raw_user[:, k] = a
            else:
                raw_uav[:, k] = a
        return raw_user, raw_uav, us, logps
    return act


def random_policy(sim: SimConfig, rng: np.random.Generator):
    """Uniform raw actions on ``[-1, 1]^d`` for every agent."""
    def act(user_obs, uav_obs):
        E = user_obs.shape[0]
        raw_user = rng.uniform(-1.0, 1.0, (E, sim.K, sim.user_action_dim))
        raw_uav = rng.uniform(-1.0, 1.0, (E, sim.U, sim.uav_action_dim))
        return raw_user, raw_uav, None, None
    return act


def constant_policy(raw_user_row: np.ndarray, raw_uav_row: np.ndarray):
    """The same raw action for every agent of a kind in every slot."""
    def act(user_obs, uav_obs):
        E, K = user_obs.shape[:2]
        U = uav_obs.shape[1]
        return (np.broadcast_to(raw_user_row, (E, K, len(raw_user_row))).copy(),
                np.broadcast_to(raw_uav_row, (E, U, len(raw_uav_row))).copy(), None, None)
    return act


# ---------------------------------------------------------------------------
# rollouts


def run_episodes(sim: SimConfig, policy: Callable, episode_ids, env_streams: Callable,
                 seed: int) -> Rollout:
    """Simulate the given episodes in lock-step under ``policy``."""
    E, N, K, U = len(episode_ids), sim.N, sim.K, sim.U
    envs = [CrowdsensingEnv(sim) for _ in range(E)]
    first = [env.reset(*env_streams(seed, ep)) for env, ep in zip(envs, episode_ids)]
    user_obs = np.stack([o[0] for o in first])
    uav_obs = np.stack([o[1] for o in first])
    state = np.stack([o[2] for o in first])

    rec_user = np.empty((N, E) + user_obs.shape[1:])
    rec_uav = np.empty((N, E) + uav_obs.shape[1:])
    rec_state = np.empty((N, E, state.shape[1]))
    rewards = np.empty((N, E, K + U))
    logp = np.zeros((N, E, K + U))
    us: list[list[np.ndarray]] = []
    processed = np.zeros(E)
    uav_bits = np.zeros(E)
    sensed = np.zeros(E)
    v_energy = np.zeros(E, dtype=int)
    v_boundary = np.zeros(E, dtype=int)
    v_collision = np.zeros(E, dtype=int)
    user_r = np.zeros(E)
    uav_r = np.zeros(E)

    for t in range(N):
        rec_user[t], rec_uav[t], rec_state[t] = user_obs, uav_obs, state
        raw_user, raw_uav, u, lp = policy(user_obs, uav_obs)
        if u is not None:
            us.append(u)
            logp[t] = lp
        nxt_user, nxt_uav, nxt_state = [], [], []
        for e, env in enumerate(envs):
            (uo, vo, st), r, _, ev = env.step(raw_user[e], raw_uav[e])
            nxt_user.append(uo)
            nxt_uav.append(vo)
            nxt_state.append(st)
            rewards[t, e] = r
            user_r[e] += ev.rewards.user_total.mean()
            uav_r[e] += ev.rewards.uav_total.mean()
            processed[e] += ev.processed.sum()
            beta = ev.action.beta
            uav_bits[e] += np.sum(beta * np.minimum(ev.D_comp, ev.D_t))
            sensed[e] += ev.D_s.sum()
            c = ev.constraints
            v_energy[e] += int(np.sum(c.user_energy < 0) + np.sum(c.uav_energy < 0))
            v_boundary[e] += int(np.sum(np.minimum(c.boundary_x, c.boundary_y) < 0))
            v_collision[e] += int(np.sum(np.triu(c.separation < 0, 1)))
        user_obs, uav_obs, state = np.stack(nxt_user), np.stack(nxt_uav), np.stack(nxt_state)

    u_per_agent = [np.stack([step[i] for step in us]) for i in range(K + U)] if us else []
    stats = EpisodeStats(
        total_reward=rewards.sum(axis=(0, 2)), user_reward=user_r, uav_reward=uav_r,
        processed_bits=processed, uav_bits=uav_bits, sensed_bits=sensed,
        energy_violations=v_energy, boundary_violations=v_boundary,
        collision_violations=v_collision,
    )
    return Rollout(rec_user, rec_uav, rec_state, rewards, u_per_agent, logp, stats)


def build_buffer(agents: list[Agent], rollout: Rollout, sim: SimConfig) -> RolloutBuffer:
    """Values, GAE and flattening (time-major) of a lock-step rollout."""
    N, E = rollout.rewards.shape[:2]
    states = rollout.states.reshape(N * E, -1)
    dones = np.zeros((N, E))
    dones[-1] = 1.0
    batches = []
    for agent in agents:
        i = agent.index
        values, _ = agent.critic.forward(agent.critic_params, states)
        values = values.reshape(N, E)
        adv, ret = compute_gae(rollout.rewards[:, :, i], values, dones, sim.gamma, sim.lam)
        if agent.kind == "user":
            obs = rollout.user_obs[:, :, i]
        else:
            obs = rollout.uav_obs[:, :, i - sim.K]
        batches.append(AgentBatch(
            obs=obs.reshape(N * E, -1), u=rollout.u[i].reshape(N * E, -1),
            logp=rollout.logp[:, :, i].reshape(-1), rewards=rollout.rewards[:, :, i].reshape(-1),
            values=values.reshape(-1), dones=dones.reshape(-1),
            advantages=adv.reshape(-1), returns=ret.reshape(-1)))
    return RolloutBuffer(states=states, agents=batches)


# ---------------------------------------------------------------------------
# evaluation


def _metrics_from_stats(episode: int, stats: EpisodeStats, wallclock: float) -> MetricsRow:
    return MetricsRow(
        episode=int(episode),
        mean_user_reward=float(np.mean(stats.user_reward)),
        mean_uav_reward=float(np.mean(stats.uav_reward)),
        processed_Mbits=float(np.mean(stats.processed_bits) / 1e6),
        energy_violations=int(np.sum(stats.energy_violations)),
        boundary_violations=int(np.sum(stats.boundary_violations)),
        collision_violations=int(np.sum(stats.collision_violations)),
        wallclock_s=float(wallclock),
    )


def evaluate_agents(agents: list[Agent], cfg: ExperimentConfig, episodes: int | None = None,
                    seed: int | None = None, episode: int = 0, policy: Callable | None = None):
    """Greedy (policy-mean) evaluation on fresh evaluation scenarios.

    Returns ``(MetricsRow, EpisodeStats)``.
    """
    seed = cfg.seed if seed is None else seed
    n = cfg.eval_episodes if episodes is None else episodes
    policy = policy or sampling_policy(agents, None, greedy=True)
    ro = run_episodes(cfg.sim, policy, list(range(n)), eval_env_streams, seed)
    return _metrics_from_stats(episode, ro.stats, 0.0), ro.stats


def random_policy_baseline(cfg: ExperimentConfig, episodes: int | None = None,
                           seed: int | None = None) -> dict:
    """Mean per-episode total reward and processed data of uniform random actions.

    Uses the training scenarios ``0..episodes-1`` so it is directly comparable
    with the training reward series.
    """
    seed = cfg.seed if seed is None else seed
    n = cfg.baseline_episodes if episodes is None else episodes
    if n == 0:
        return {"episodes": 0, "total_reward": float("nan"), "processed_Mbits": float("nan")}
    totals, processed = [], []
    E = cfg.episodes_per_update
    for start in range(0, n, E):
        ids = list(range(start, min(start + E, n)))
        pol = random_policy(cfg.sim, streams.stream(seed, streams.BASELINE, start))
        ro = run_episodes(cfg.sim, pol, ids, training_env_streams, seed)
        totals.extend(ro.stats.total_reward)
        processed.extend(ro.stats.processed_bits / 1e6)
    return {"episodes": n, "total_reward": float(np.mean(totals)),
            "processed_Mbits": float(np.mean(processed))}


# ---------------------------------------------------------------------------
# metrics files


def emit_metrics(series: list[MetricsRow], path: str | Path) -> None:
    """Write the metrics table (header plus one row per evaluation point)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in series:
            writer.writerow([_fmt(getattr(row, c)) for c in METRIC_COLUMNS])


def append_metrics(row: MetricsRow, path: str | Path) -> None:
    """Append one row, writing the header first if the file is new; flushes."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(METRIC_COLUMNS)
        writer.writerow([_fmt(getattr(row, c)) for c in METRIC_COLUMNS])
        fh.flush()


def read_metrics(path: str | Path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRIC_COLUMNS:
            raise ValueError(f"unexpected metrics header {header}")
        types = {f.name: f.type for f in fields(MetricsRow)}
        out = []
        for rec in reader:
            if len(rec) != len(METRIC_COLUMNS):
                raise ValueError(f"row with {len(rec)} columns, expected {len(METRIC_COLUMNS)}")
            kw = {c: (int(v) if types[c] == "int" else float(v)) for c, v in zip(METRIC_COLUMNS, rec)}
            out.append(MetricsRow(**kw))
        return out


def write_table(rows: list[dict], path: str | Path, columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_fmt(r[c]) for c in columns])


def read_table(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse(v) for k, v in rec.items()} for rec in reader]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


# ---------------------------------------------------------------------------
# checkpoints


def agent_arrays(agents: list[Agent]) -> dict[str, np.ndarray]:
    out = {}
    for a in agents:
        for name in a.actor_params:
            out[f"agent{a.index}/{name}"] = a.actor_params[name]
        for name in a.critic_params:
            out[f"agent{a.index}/{name}"] = a.critic_params[name]
    return out


def checkpoint_metadata(cfg: ExperimentConfig) -> dict:
    return {"K": cfg.sim.K, "U": cfg.sim.U, "variant": cfg.variant, "net": cfg.to_dict()["net"]}


def save_checkpoint(agents: list[Agent], cfg: ExperimentConfig, path: str | Path,
                    extra: dict | None = None) -> None:
    meta = checkpoint_metadata(cfg)
    meta.update(extra or {})
    ckpt.save(path, agent_arrays(agents), meta)


def load_checkpoint(path: str | Path, cfg: ExperimentConfig) -> list[Agent]:
    """Rebuild agents for ``cfg`` and fill them from ``path``.

    Raises :class:`ShapeError` naming the first array whose shape differs
    from what the configuration expects, and :class:`CheckpointMismatch` on
    a different actor variant or a missing/extra array.
    """
    arrays, meta = ckpt.load(path)
    agents = build_agents(cfg)
    expected = agent_arrays(agents)
    for name, value in arrays.items():
        if name in expected and expected[name].shape != value.shape:
            raise ShapeError(f"checkpoint array {name!r} has shape {value.shape}, config expects "
                             f"{expected[name].shape} (checkpoint K={meta.get('K')}, "
                             f"U={meta.get('U')}; config K={cfg.sim.K}, U={cfg.sim.U})")
    if meta.get("variant") != cfg.variant:
        raise CheckpointMismatch(f"checkpoint variant {meta.get('variant')!r} != {cfg.variant!r}")
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise CheckpointMismatch(f"checkpoint arrays differ from config: missing {missing[:3]}, "
                                 f"unexpected {extra[:3]}")
    for name, value in expected.items():
        value[...] = arrays[name]
    return agents


# ---------------------------------------------------------------------------
# training


def run_training(cfg: ExperimentConfig, output_dir: str | Path | None = None,
                 write_files: bool = True, progress: Callable | None = None) -> TrainingResult:
    """Train all agents for ``cfg.max_episodes`` episodes.

    Writes ``metrics.csv``, ``train_rewards.csv``, ``baseline.csv``,
    ``config.yaml`` and ``final.ckpt`` into the output directory when
    ``write_files`` is set.  Deterministic given the configuration.
    """
    from .config import dump_config

    sim, seed = cfg.sim, cfg.seed
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    if write_files:
        out.mkdir(parents=True, exist_ok=True)
        metrics_path = out / "metrics.csv"
        if metrics_path.exists():
            metrics_path.unlink()
        dump_config(cfg, out / "config.yaml")

    t0 = time.perf_counter()
    agents = build_agents(cfg)
    baseline = random_policy_baseline(cfg)
    metrics: list[MetricsRow] = []
    rewards: list[dict] = []
    update_stats = []

    def evaluate(ep: int) -> None:
        row, _ = evaluate_agents(agents, cfg, episode=ep)
        if cfg.record_wallclock:
            row.wallclock_s = time.perf_counter() - t0
        metrics.append(row)
        if write_files:
            append_metrics(row, metrics_path)
        logger.info("episode %d: user %.3f uav %.3f processed %.3f Mb", ep, row.mean_user_reward,
                    row.mean_uav_reward, row.processed_Mbits)

    evaluate(0)
    E = cfg.episodes_per_update
    episode, update = 0, 0
    next_eval = cfg.eval_every
    while episode < cfg.max_episodes:
        ids = list(range(episode, min(episode + E, cfg.max_episodes)))
        policy = sampling_policy(agents, streams.stream(seed, streams.POLICY, update))
        ro = run_episodes(sim, policy, ids, training_env_streams, seed)
        buffer = build_buffer(agents, ro, sim)
        st = sequential_update_round(agents, buffer, cfg,
                                     streams.stream(seed, streams.PERMUTATION, update),
                                     streams.stream(seed, streams.MINIBATCH, update))
        update_stats.append(st)
        for j, ep in enumerate(ids):
            rewards.append({"episode": ep + 1,
                            "total_reward": float(ro.stats.total_reward[j]),
                            "mean_user_reward": float(ro.stats.user_reward[j]),
                            "mean_uav_reward": float(ro.stats.uav_reward[j]),
                            "processed_Mbits": float(ro.stats.processed_bits[j] / 1e6)})
        episode += len(ids)
        update += 1
        if progress is not None:
            progress(episode, rewards)
        if episode >= next_eval or episode >= cfg.max_episodes:
            evaluate(episode)
            while next_eval <= episode:
                next_eval += cfg.eval_every

    if write_files:
        write_table(rewards, out / "train_rewards.csv", REWARD_COLUMNS)
        write_table([baseline], out / "baseline.csv", ["episodes", "total_reward", "processed_Mbits"])
        save_checkpoint(agents, cfg, out / "final.ckpt", {"episodes": episode})
    return TrainingResult(agents, metrics, rewards, baseline, out if write_files else None,
                          update_stats)


def run_evaluation(checkpoint: str | Path | list[Agent], cfg: ExperimentConfig,
                   episodes: int | None = None, seed: int | None = None) -> MetricsRow:
    """Greedy evaluation of a checkpoint file (or of in-memory agents)."""
    agents = checkpoint if isinstance(checkpoint, list) else load_checkpoint(checkpoint, cfg)
    row, _ = evaluate_agents(agents, cfg, episodes=episodes, seed=seed)
    return row


# ---------------------------------------------------------------------------
# sweeps


SWEEP_AXES = {"uav_count": "sim.U", "uav_frequency": "sim.f_u_max"}


def _sweep_job(args):
    cfg, value, seed, out = args
    cfg = with_overrides(cfg, [f"seed={seed}"])
    result = run_training(cfg, output_dir=out, write_files=out is not None)
    row = run_evaluation(result.agents, cfg)
    return value, seed, row.processed_Mbits


def sweep(cfg: ExperimentConfig, axis: str, values, seeds=(0, 1, 2), output_dir: str | Path | None = None,
          workers: int | None = None) -> list[dict]:
    """Train one policy per (value, seed) and tabulate median processed data per value.

    ``uav_count`` values are UAV counts; ``uav_frequency`` values are in Hz.
    Runs are independent, so ``workers > 1`` trains them in separate processes
    without changing any result.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    values = list(values)
    if values != sorted(values):
        raise ValueError("sweep values must be sorted ascending")
    key = SWEEP_AXES[axis]
    jobs = []
    for v in values:
        vcfg = with_overrides(cfg, [f"{key}={v}"])
        for s in seeds:
            out = None if output_dir is None else Path(output_dir) / f"{axis}_{v}" / f"seed{s}"
            jobs.append((vcfg, v, s, out))
    workers = cfg.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    table = []
    for v in values:
        per_seed = [r[2] for r in results if r[0] == v]
        table.append({"axis": axis, "value": v, "median_processed_Mbits": float(np.median(per_seed)),
                      "per_seed_Mbits": ";".join(repr(x) for x in per_seed)})
    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        write_table(table, Path(output_dir) / f"sweep_{axis}.csv")
    return table


# ---------------------------------------------------------------------------
# model complexity


def report_model_complexity(network) -> dict:
    """Per-layer trainable parameters and multiply-accumulate counts.

    Convolutions count ``L_out * k * C_in * C_out`` MACs, KAN layers
    ``G' * in * out`` and dense layers ``in * out``.  Accepts an actor, a
    critic or a :class:`~uavmcs.nn.layers.Sequential`.
    """
    body = getattr(network, "body", network)
    layers = []
    for layer in body.layers:
        if isinstance(layer, (Conv1d, KANLayer, Linear)):
            layers.append({"layer": layer.name, "kind": type(layer).__name__,
                           "params": layer.param_count(), "macs": layer.macs()})
    extra = network.param_count() - body.param_count() if hasattr(network, "body") else 0
    return {"layers": layers,
            "params": sum(r["params"] for r in layers) + extra,
            "macs": sum(r["macs"] for r in layers)}


def model_complexity(cfg: ExperimentConfig) -> dict:
    sim = cfg.sim
    user = Actor(cfg.variant, sim.user_obs_dim, sim.user_action_dim, cfg.net)
    uav = Actor(cfg.variant, sim.uav_obs_dim, sim.uav_action_dim, cfg.net)
    critic = Critic(sim.global_state_dim, cfg.net.critic_hidden)
    return {"user_actor": report_model_complexity(user), "uav_actor": report_model_complexity(uav),
            "critic": report_model_complexity(critic)}


def default_output_root() -> Path:
    return Path(os.environ.get("UAVMCS_OUTPUT_ROOT", "runs"))


def metrics_to_text(series: list[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in series:
        writer.writerow([_fmt(getattr(row, c)) for c in METRIC_COLUMNS])
    return buf.getvalue()
