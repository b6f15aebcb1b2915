"""Sweep orchestration: build seeded scenarios over a (users, capacity) grid,
run every policy on the same realizations, and emit raw plus aggregated CSVs.

Seeding discipline: every cell (users, capacity, repetition) derives its own
seed sequence from the master seed, so all policies inside a cell face the
same user placement and the same admission ordering, and the whole sweep is
reproducible byte for byte.  Wall-clock timings go to a separate file so the
raw results stay deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .agent import AgentConfig, DuelingDQNAgent, TrainingLog
from .baselines import GbwConfig, PolicyKind, make_policy, oracle_enumerate
from .channel import LinkBudgetParams
from .constellation import ConstellationSpec, GroundUser
from .environment import (
    EnvConfig,
    EpisodeTrace,
    HandoverEnv,
    Scenario,
    episode_metrics,
    observation_dim,
)
from .errors import ConfigurationError
from .neuralnet import forward_dueling_batch, load_checkpoint, save_checkpoint
from .reward import (
    AdaptationTargets,
    AdaptiveWeights,
    StaticObjectiveParams,
    WeightMode,
    scalarized_objective,
    trace_reward_sum,
)

RAW_COLUMNS = ("policy", "users", "capacity", "seed", "throughput_bps",
               "blocking_prob", "handovers_per_user", "episode_reward")
AGGREGATE_COLUMNS = (
    "policy", "users", "capacity", "reps",
    "throughput_bps_mean", "throughput_bps_std",
    "blocking_prob_mean", "blocking_prob_std",
    "handovers_per_user_mean", "handovers_per_user_std",
    "episode_reward_mean", "episode_reward_std",
    "objective_mean",
)

_TRAIN_REP = 1_000_003  # rep tag reserved for training realizations


@dataclass(frozen=True)
class UserPlacement:
    """Uniform box of ground users around a regional center."""

    center_lat_deg: float = 45.0
    center_lon_deg: float = 10.0
    radius_deg: float = 3.0

    def __post_init__(self):
        if self.radius_deg <= 0:
            raise ConfigurationError(f"radius must be positive, got {self.radius_deg}")


@dataclass(frozen=True)
class RewardSettings:
    mode: str = "adaptive"
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2
    eta: float = 0.5
    target_blocking: float = 0.05
    target_handover: float = 0.05
    alpha_min: float = 0.1
    lambda1: float = 1.0
    lambda2: float = 0.5
    rate_norm_bps: float = 6.0e7

    def __post_init__(self):
        if self.mode not in ("adaptive", "static"):
            raise ConfigurationError(f"unknown reward mode {self.mode!r}")
        if self.rate_norm_bps <= 0:
            raise ConfigurationError("rate_norm_bps must be positive")

    def initial_weights(self) -> AdaptiveWeights:
        mode = WeightMode.ADAPTIVE if self.mode == "adaptive" else WeightMode.STATIC
        return AdaptiveWeights(self.alpha, self.beta, self.gamma, mode=mode)

    def eval_weights(self) -> AdaptiveWeights:
        # fixed weights for scoring rollouts, identical for every policy
        return AdaptiveWeights(self.alpha, self.beta, self.gamma,
                               mode=WeightMode.STATIC)

    def targets(self) -> AdaptationTargets:
        return AdaptationTargets(self.target_blocking, self.target_handover,
                                 self.alpha_min)

    def objective_params(self) -> StaticObjectiveParams:
        return StaticObjectiveParams(self.lambda1, self.lambda2)


@dataclass(frozen=True)
class ExperimentConfig:
    users_sweep: tuple[int, ...] = (10, 15, 20, 25, 30)
    capacity_sweep: tuple[int, ...] = (1, 3, 5, 7, 9)
    episodes: int = 300
    repetitions: int = 10
    episode_seconds: float = 3600.0
    slot_seconds: float = 10.0
    policies: tuple[str, ...] = ("random", "mvt", "mac", "gbw", "msh", "mshbo", "trained")
    master_seed: int = 7
    constellation: ConstellationSpec = field(default_factory=ConstellationSpec.telesat_like)
    placement: UserPlacement = field(default_factory=UserPlacement)
    link: LinkBudgetParams = field(default_factory=LinkBudgetParams)
    k_max: int = 8
    blocking_ema_decay: float = 0.9
    reward: RewardSettings = field(default_factory=RewardSettings)
    agent: AgentConfig = field(default_factory=AgentConfig)
    window_slots: int = 6
    gbw: GbwConfig = field(default_factory=GbwConfig)

    def __post_init__(self):
        if not self.users_sweep or min(self.users_sweep) < 1:
            raise ConfigurationError("users_sweep must list positive counts")
        if not self.capacity_sweep or min(self.capacity_sweep) < 1:
            raise ConfigurationError("capacity_sweep must list positive capacities")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if self.episodes < 0:
            raise ConfigurationError("episodes must be non-negative")
        if self.episode_seconds <= 0 or self.slot_seconds <= 0:
            raise ConfigurationError("episode and slot durations must be positive")
        for p in self.policies:
            try:
                PolicyKind(p)
            except ValueError as exc:
                raise ConfigurationError(f"unknown policy {p!r}") from exc

    @property
    def n_slots(self) -> int:
        return max(int(round(self.episode_seconds / self.slot_seconds)), 1)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kwargs = {}
        for key in ("users_sweep", "capacity_sweep", "policies"):
            if key in data:
                kwargs[key] = tuple(data.pop(key))
        for key in ("episodes", "repetitions", "master_seed", "k_max"):
            if key in data:
                kwargs[key] = int(data.pop(key))
        for key in ("episode_seconds", "slot_seconds", "blocking_ema_decay"):
            if key in data:
                kwargs[key] = float(data.pop(key))
        if "window_slots" in data:
            kwargs["window_slots"] = int(data.pop("window_slots"))
        cst = data.pop("constellation", None)
        if cst is not None:
            if cst == "telesat":
                kwargs["constellation"] = ConstellationSpec.telesat_like()
            else:
                kwargs["constellation"] = ConstellationSpec.from_dict(cst)
        if "min_elevation_deg" in data:
            base = kwargs.get("constellation", ConstellationSpec.telesat_like())
            kwargs["constellation"] = ConstellationSpec(
                shells=base.shells,
                min_elevation_deg=float(data.pop("min_elevation_deg")),
            )
        if "users" in data:
            u = data.pop("users")
            kwargs["placement"] = UserPlacement(
                center_lat_deg=float(u.get("center_lat_deg", 45.0)),
                center_lon_deg=float(u.get("center_lon_deg", 10.0)),
                radius_deg=float(u.get("radius_deg", 3.0)),
            )
        if "link" in data:
            kwargs["link"] = LinkBudgetParams.from_dict(data.pop("link"))
        if "reward" in data:
            r = data.pop("reward")
            kwargs["reward"] = RewardSettings(
                **{k: (v if k == "mode" else float(v)) for k, v in r.items()}
            )
        if "agent" in data:
            a = dict(data.pop("agent"))
            for k in ("trunk_dims", "stream_dims"):
                if k in a:
                    a[k] = tuple(int(x) for x in a[k])
            for k in ("batch_size", "target_sync_every", "replay_capacity",
                      "warm_start_transitions"):
                if k in a:
                    a[k] = int(a[k])
            for k in ("discount", "learning_rate", "epsilon0", "epsilon_min"):
                if k in a:
                    a[k] = float(a[k])
            if "k_decay" in a and a["k_decay"] is not None:
                a["k_decay"] = float(a["k_decay"])
            kwargs["agent"] = AgentConfig(**a)
        if "gbw" in data:
            g = data.pop("gbw")
            kwargs["gbw"] = GbwConfig(
                w_rate=float(g.get("w_rate", 1.0)),
                w_handover=float(g.get("w_handover", 0.3)),
                w_block=float(g.get("w_block", 0.5)),
                window_slots=int(g.get("window_slots", 6)),
            )
        if data:
            raise ConfigurationError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} did not parse to a mapping")
    return ExperimentConfig.from_dict(data)


@dataclass(frozen=True)
class ResultRow:
    policy: str
    users: int
    capacity: int
    seed: int
    throughput_bps: float
    blocking_prob: float
    handovers_per_user: float
    episode_reward: float
    wall_time_s: float

    def csv_cells(self) -> list[str]:
        return [self.policy, str(self.users), str(self.capacity), str(self.seed),
                repr(float(self.throughput_bps)), repr(float(self.blocking_prob)),
                repr(float(self.handovers_per_user)), repr(float(self.episode_reward))]


# --- cell construction -------------------------------------------------------

def _cell_streams(config: ExperimentConfig, users: int, capacity: int, rep: int):
    ss = np.random.SeedSequence((config.master_seed, users, capacity, rep))
    placement_child, env_child, policy_child, agent_child = ss.spawn(4)
    return {
        "placement": np.random.default_rng(placement_child),
        "env_seed": int(env_child.generate_state(1)[0] % 2**31),
        "policy_seed": int(policy_child.generate_state(1)[0] % 2**31),
        "agent_seed": int(agent_child.generate_state(1)[0] % 2**31),
    }


def place_users(config: ExperimentConfig, n_users: int,
                rng: np.random.Generator) -> list[GroundUser]:
    p = config.placement
    out = []
    for u in range(n_users):
        lat = p.center_lat_deg + p.radius_deg * (2.0 * rng.random() - 1.0)
        lon = p.center_lon_deg + p.radius_deg * (2.0 * rng.random() - 1.0)
        lat = min(max(lat, -89.0), 89.0)
        lon = (lon + 180.0) % 360.0 - 180.0
        out.append(GroundUser(user_id=u, latitude_deg=lat, longitude_deg=lon))
    return out


def build_cell(config: ExperimentConfig, users: int, capacity: int,
               rep: int) -> tuple[HandoverEnv, dict]:
    """Environment plus the derived seed bundle for one sweep cell."""
    streams = _cell_streams(config, users, capacity, rep)
    ground = place_users(config, users, streams["placement"])
    scenario = Scenario.from_constellation(
        config.constellation, ground, config.n_slots, config.slot_seconds,
        link=config.link,
    )
    env_cfg = EnvConfig(
        capacity=capacity, k_max=config.k_max,
        rate_norm_bps=config.reward.rate_norm_bps,
        blocking_ema_decay=config.blocking_ema_decay,
    )
    return HandoverEnv(scenario, env_cfg, seed=streams["env_seed"]), streams


# --- rollout and evaluation --------------------------------------------------

def rollout_episode(env: HandoverEnv, actions_fn, reset_seed: int | None = None) -> EpisodeTrace:
    env.reset(seed=reset_seed)
    while not env.done:
        env.step(actions_fn(env))
    return env.trace()


def greedy_actions_fn(net):
    """Wrap a trained Q network into an `fn(env) -> actions` rollout policy."""

    def actions_fn(env: HandoverEnv) -> np.ndarray:
        obs = env.observations()
        masks = env.valid_action_masks()
        q = forward_dueling_batch(net, obs, masks)
        return np.where(masks.any(axis=1), np.argmax(q, axis=1), -1).astype(np.int64)

    return actions_fn


def checkpoint_path(checkpoint_dir, users: int, capacity: int) -> Path:
    return Path(checkpoint_dir) / f"trained_{users}_{capacity}.ckpt"


def _policy_actions_fn(config: ExperimentConfig, policy: str, users: int,
                       capacity: int, policy_seed: int, checkpoint_dir):
    kind = PolicyKind(policy)
    if kind is PolicyKind.TRAINED:
        if checkpoint_dir is None:
            raise ConfigurationError("trained policy requested without a checkpoint dir")
        path = checkpoint_path(checkpoint_dir, users, capacity)
        if not path.exists():
            raise ConfigurationError(f"missing checkpoint {path}")
        return greedy_actions_fn(load_checkpoint(path))
    return make_policy(kind, seed=policy_seed, gbw_config=config.gbw,
                       window_slots=config.window_slots)


def run_cell(config: ExperimentConfig, policy: str, users: int, capacity: int,
             rep: int, checkpoint_dir=None,
             env: HandoverEnv | None = None) -> ResultRow:
    """One evaluation episode of one policy on one seeded cell realization."""
    if env is None:
        env, streams = build_cell(config, users, capacity, rep)
    else:
        streams = _cell_streams(config, users, capacity, rep)
    actions_fn = _policy_actions_fn(config, policy, users, capacity,
                                    streams["policy_seed"], checkpoint_dir)
    t0 = time.perf_counter()
    trace = rollout_episode(env, actions_fn, reset_seed=streams["env_seed"])
    wall = time.perf_counter() - t0
    m = episode_metrics(trace)
    reward = trace_reward_sum(trace, config.reward.eval_weights(),
                              config.reward.rate_norm_bps)
    return ResultRow(
        policy=policy, users=users, capacity=capacity, seed=rep,
        throughput_bps=m.throughput_bps, blocking_prob=m.blocking_rate,
        handovers_per_user=m.handover_rate, episode_reward=reward,
        wall_time_s=wall,
    )


# --- sweep -------------------------------------------------------------------

def aggregate_rows(config: ExperimentConfig, rows: list[ResultRow]) -> list[dict]:
    """Per-(policy, users, capacity) means and population stds, in sweep order."""
    groups: dict[tuple, list[ResultRow]] = {}
    order = []
    for row in rows:
        key = (row.policy, row.users, row.capacity)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    params = config.reward.objective_params()
    for key in order:
        rs = groups[key]
        cols = {
            "throughput_bps": np.array([r.throughput_bps for r in rs]),
            "blocking_prob": np.array([r.blocking_prob for r in rs]),
            "handovers_per_user": np.array([r.handovers_per_user for r in rs]),
            "episode_reward": np.array([r.episode_reward for r in rs]),
        }
        agg = {"policy": key[0], "users": key[1], "capacity": key[2], "reps": len(rs)}
        for name, vals in cols.items():
            agg[f"{name}_mean"] = float(vals.mean())
            agg[f"{name}_std"] = float(vals.std())
        agg["objective_mean"] = (
            agg["throughput_bps_mean"] / config.reward.rate_norm_bps
            - params.lambda1 * agg["blocking_prob_mean"]
            - params.lambda2 * agg["handovers_per_user_mean"]
        )
        out.append(agg)
    return out


def write_raw_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RAW_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row.csv_cells()) + "\n")


def write_aggregate_csv(aggregates: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(AGGREGATE_COLUMNS) + "\n")
        for agg in aggregates:
            cells = []
            for col in AGGREGATE_COLUMNS:
                v = agg[col]
                cells.append(repr(float(v)) if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")


def write_timings_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("policy,users,capacity,seed,wall_time_s\n")
        for row in rows:
            fh.write(f"{row.policy},{row.users},{row.capacity},{row.seed},"
                     f"{float(row.wall_time_s)!r}\n")


def run_sweep(config: ExperimentConfig, out_dir, checkpoint_dir=None,
              policies: tuple[str, ...] | None = None):
    """Every (policy, users, capacity, rep) cell, serial and deterministic.

    Emits raw_results.csv, aggregate_results.csv, timings.csv, and (only when
    cells failed) failures.csv into `out_dir`.  Returns (rows, aggregates,
    failures).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policies = config.policies if policies is None else policies
    rows: list[ResultRow] = []
    failures: list[dict] = []
    env_cache: dict[tuple, HandoverEnv] = {}
    for policy in policies:
        for users in config.users_sweep:
            for capacity in config.capacity_sweep:
                for rep in range(config.repetitions):
                    key = (users, capacity, rep)
                    try:
                        if key not in env_cache:
                            env_cache[key], _ = build_cell(config, users, capacity, rep)
                        rows.append(run_cell(config, policy, users, capacity, rep,
                                             checkpoint_dir=checkpoint_dir,
                                             env=env_cache[key]))
                    except Exception as exc:  # record and move on
                        failures.append({
                            "policy": policy, "users": users,
                            "capacity": capacity, "seed": rep,
                            "error": f"{type(exc).__name__}: {exc}",
                        })
    aggregates = aggregate_rows(config, rows)
    write_raw_csv(rows, out / "raw_results.csv")
    write_aggregate_csv(aggregates, out / "aggregate_results.csv")
    write_timings_csv(rows, out / "timings.csv")
    if failures:
        with open(out / "failures.csv", "w", newline="") as fh:
            fh.write("policy,users,capacity,seed,error\n")
            for f in failures:
                err = str(f["error"]).replace('"', "'")
                fh.write(f'{f["policy"]},{f["users"]},{f["capacity"]},'
                         f'{f["seed"]},"{err}"\n')
    return rows, aggregates, failures


# --- training ----------------------------------------------------------------

def train_cell(config: ExperimentConfig, users: int, capacity: int,
               out_dir, checkpoint_dir=None) -> tuple[Path, TrainingLog]:
    """Train one agent on this cell's own training realization and write the
    checkpoint plus its training log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    env, streams = build_cell(config, users, capacity, _TRAIN_REP)
    agent = DuelingDQNAgent(observation_dim(config.k_max), config.k_max,
                            config.agent, seed=streams["agent_seed"])
    expert = None
    if config.agent.warm_start_policy != "none":
        expert = make_policy(config.agent.warm_start_policy,
                             seed=streams["policy_seed"],
                             gbw_config=config.gbw,
                             window_slots=config.window_slots)
    path = checkpoint_path(ckpt_dir, users, capacity)
    log, _ = agent.train(
        env, config.episodes, master_seed=streams["agent_seed"],
        weights=config.reward.initial_weights(),
        targets=config.reward.targets(), eta=config.reward.eta,
        rate_norm_bps=config.reward.rate_norm_bps, expert_actions=expert,
        abort_dump_path=ckpt_dir / f"abort_{users}_{capacity}.ckpt",
    )
    save_checkpoint(agent.online, path)
    log.write_csv(out / f"training_log_{users}_{capacity}.csv")
    return path, log


def train_all(config: ExperimentConfig, out_dir, checkpoint_dir=None) -> list[Path]:
    paths = []
    for users in config.users_sweep:
        for capacity in config.capacity_sweep:
            path, _ = train_cell(config, users, capacity, out_dir, checkpoint_dir)
            paths.append(path)
    return paths


# --- tiny-instance oracle validation ----------------------------------------

def oracle_validation_suite(n_instances: int = 50, seed: int = 0,
                            params: StaticObjectiveParams | None = None) -> dict:
    """Random tiny scenarios: the enumeration optimum must dominate every
    hand-crafted policy rolled out in the environment.

    Returns a summary with the worst (most negative) dominance margin
    `min_gap` = min over instances and policies of (oracle - policy value).
    """
    params = StaticObjectiveParams(1.0, 0.5) if params is None else params
    rng = np.random.default_rng(seed)
    kinds = (PolicyKind.RANDOM, PolicyKind.MVT, PolicyKind.MAC,
             PolicyKind.GBW, PolicyKind.MSH, PolicyKind.MSHBO)
    min_gap = np.inf
    checked = 0
    for i in range(n_instances):
        U = int(rng.integers(1, 4))
        S = int(rng.integers(2, 5))
        T = int(rng.integers(2, 5))
        rates = rng.random((T, U, S)) * (rng.random((T, U, S)) < 0.75)
        if not rates.any():
            continue
        scenario = Scenario.synthetic(rates, slot_seconds=1.0)
        capacity = int(rng.integers(1, 3))
        best, _ = oracle_enumerate(scenario, capacity, params, rate_norm_bps=1.0)
        env = HandoverEnv(scenario, EnvConfig(capacity=capacity, k_max=S,
                                              rate_norm_bps=1.0),
                          seed=int(rng.integers(2**31)))
        for kind in kinds:
            fn = make_policy(kind, seed=int(rng.integers(2**31)))
            trace = rollout_episode(env, fn)
            value = scalarized_objective(episode_metrics(trace), params,
                                         rate_norm_bps=1.0)
            min_gap = min(min_gap, best - value)
        checked += 1
    return {"instances": checked, "min_gap": float(min_gap),
            "dominated": bool(min_gap >= -1e-9)}
