"""Dueling double-DQN agent: epsilon-greedy rollouts, uniform replay, and
bootstrap targets where the online net picks the next action and the target
net prices it.

One shared network serves all users; at every slot each user's action is
selected independently from its own observation, the environment resolves
admissions jointly, and one per-user transition per slot lands in the replay
buffer.  The exploration rate decays in a global step counter that never
resets between episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import HandoverEnv, episode_metrics, mask_from_vector
from .errors import ConfigurationError, NoCandidateError, TrainingError
from .neuralnet import (
    AdamState,
    DuelingQNet,
    flat_grads,
    flat_params,
    forward_dueling_batch,
    loss_and_gradient,
    optimizer_step,
    save_checkpoint,
    set_flat_params,
)
from .reward import (
    AdaptationTargets,
    AdaptiveWeights,
    WeightMode,
    adapt_weights,
    step_rewards,
)


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    next_mask: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions in preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int, k_max: int):
        if capacity < 1:
            raise ConfigurationError(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._obs = np.zeros((capacity, obs_dim))
        self._action = np.zeros(capacity, dtype=np.int64)
        self._reward = np.zeros(capacity)
        self._next_obs = np.zeros((capacity, obs_dim))
        self._next_mask = np.zeros((capacity, k_max), dtype=bool)
        self._terminal = np.zeros(capacity, dtype=bool)
        self._write = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, observation, action, reward, next_observation, next_mask,
             terminal) -> None:
        i = self._write
        self._obs[i] = observation
        self._action[i] = action
        self._reward[i] = reward
        self._next_obs[i] = next_observation
        self._next_mask[i] = next_mask
        self._terminal[i] = terminal
        self._write = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def get(self, index: int) -> Transition:
        if not 0 <= index < self._size:
            raise IndexError(index)
        # index 0 is the oldest surviving transition
        i = (self._write - self._size + index) % self.capacity
        return Transition(self._obs[i].copy(), int(self._action[i]),
                          float(self._reward[i]), self._next_obs[i].copy(),
                          self._next_mask[i].copy(), bool(self._terminal[i]))

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self._size < batch_size:
            raise ValueError(f"buffer holds {self._size} < batch {batch_size}")
        idx = rng.integers(self._size, size=batch_size)
        idx = (self._write - self._size + idx) % self.capacity
        return {
            "observation": self._obs[idx],
            "action": self._action[idx],
            "reward": self._reward[idx],
            "next_observation": self._next_obs[idx],
            "next_mask": self._next_mask[idx],
            "terminal": self._terminal[idx],
        }


@dataclass(frozen=True)
class EpsilonSchedule:
    epsilon0: float = 0.2
    epsilon_min: float = 0.01
    k_decay: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon_min <= self.epsilon0 <= 1.0:
            raise ConfigurationError(
                f"need 0 <= epsilon_min <= epsilon0 <= 1, got "
                f"({self.epsilon0}, {self.epsilon_min})"
            )
        if self.k_decay <= 0:
            raise ConfigurationError(f"k_decay must be positive, got {self.k_decay}")


def epsilon_at(schedule: EpsilonSchedule, t: int) -> float:
    """Exploration rate at global step t: max(eps_min, eps0 * e^(-t/K))."""
    if t < 0:
        raise ConfigurationError(f"step must be non-negative, got {t}")
    return max(schedule.epsilon_min, schedule.epsilon0 * math.exp(-t / schedule.k_decay))


@dataclass(frozen=True)
class AgentConfig:
    discount: float = 0.99
    batch_size: int = 256
    target_sync_every: int = 1000
    replay_capacity: int = 200_000
    learning_rate: float = 1e-3
    epsilon0: float = 0.2
    epsilon_min: float = 0.01
    k_decay: float | None = None  # None: a third of the planned training steps
    warm_start_policy: str = "mshbo"  # "none" disables expert seeding
    warm_start_transitions: int = 5000
    trunk_dims: tuple[int, ...] = (128, 128)
    stream_dims: tuple[int, ...] = (64,)

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ConfigurationError(f"discount must be in [0, 1), got {self.discount}")
        if self.batch_size > self.replay_capacity:
            raise ConfigurationError("batch_size cannot exceed replay capacity")
        if self.target_sync_every < 1:
            raise ConfigurationError("target_sync_every must be >= 1")
        if self.warm_start_policy not in ("none", "mshbo"):
            raise ConfigurationError(
                f"unknown warm start policy {self.warm_start_policy!r}"
            )


@dataclass
class TrainingLog:
    """Per-episode training trajectory, one array entry per episode."""

    episode: list = field(default_factory=list)
    mean_reward: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    blocking_rate: list = field(default_factory=list)
    handover_rate: list = field(default_factory=list)

    COLUMNS = ("episode", "mean_reward", "loss", "epsilon", "alpha", "beta",
               "gamma", "blocking_rate", "handover_rate")

    def append(self, **kwargs) -> None:
        for col in self.COLUMNS:
            getattr(self, col).append(kwargs[col])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for i in range(len(self.episode)):
                cells = [str(self.episode[i])]
                cells += [repr(float(getattr(self, c)[i])) for c in self.COLUMNS[1:]]
                fh.write(",".join(cells) + "\n")


def compute_targets(online: DuelingQNet, target: DuelingQNet, rewards: np.ndarray,
                    next_obs: np.ndarray, next_masks: np.ndarray,
                    terminal: np.ndarray, discount: float) -> np.ndarray:
    """Bootstrap targets y = r + delta * Q_target(s', argmax_a Q_online(s', a)).

    The next action is chosen by the online network, its value read from the
    target network.  Terminal rows and rows with no valid next slot reduce to
    y = r.
    """
    B = rewards.shape[0]
    q_online = forward_dueling_batch(online, next_obs, next_masks)
    a_star = np.argmax(q_online, axis=1)
    q_target = forward_dueling_batch(target, next_obs, next_masks)
    bootstrap = next_masks.any(axis=1) & ~terminal
    value = np.where(bootstrap, q_target[np.arange(B), a_star], 0.0)
    return rewards + discount * value


class DuelingDQNAgent:
    """Owns the online/target network pair, the optimizer, and replay."""

    def __init__(self, obs_dim: int, k_max: int, config: AgentConfig | None = None,
                 seed: int = 0):
        self.config = AgentConfig() if config is None else config
        init_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD0E)))
        self.online = DuelingQNet.create(
            obs_dim, k_max, init_rng,
            trunk_dims=self.config.trunk_dims, stream_dims=self.config.stream_dims,
        )
        self.target = self.online.copy()
        self.optimizer = AdamState(learning_rate=self.config.learning_rate)
        self.buffer = ReplayBuffer(self.config.replay_capacity, obs_dim, k_max)
        self.k_max = k_max
        self.global_step = 0
        self.learn_steps = 0
        self.schedule = EpsilonSchedule(
            self.config.epsilon0, self.config.epsilon_min,
            self.config.k_decay if self.config.k_decay is not None else 1.0,
        )

    # -- acting ---------------------------------------------------------------

    def select_action(self, observation: np.ndarray, mask: np.ndarray,
                      rng: np.random.Generator, epsilon: float | None = None) -> int:
        mask = np.asarray(mask, dtype=bool)
        valid = np.flatnonzero(mask)
        if valid.size == 0:
            raise NoCandidateError("no valid action slot under the given mask")
        eps = epsilon_at(self.schedule, self.global_step) if epsilon is None else epsilon
        if rng.random() < eps:
            return int(valid[rng.integers(valid.size)])
        q = forward_dueling_batch(self.online, observation[None, :], mask[None, :])[0]
        # argmax returns the first maximum, which is the lowest slot index
        return int(np.argmax(q))

    def select_actions(self, observations: np.ndarray, masks: np.ndarray,
                       rng: np.random.Generator,
                       epsilon: float | None = None) -> np.ndarray:
        """Greedy/exploring actions for all users; -1 where nothing is valid."""
        U = observations.shape[0]
        actions = np.full(U, -1, dtype=np.int64)
        eps = epsilon_at(self.schedule, self.global_step) if epsilon is None else epsilon
        any_valid = masks.any(axis=1)
        q = forward_dueling_batch(self.online, observations, masks)
        for u in range(U):
            if not any_valid[u]:
                continue
            if rng.random() < eps:
                valid = np.flatnonzero(masks[u])
                actions[u] = valid[rng.integers(valid.size)]
            else:
                actions[u] = np.argmax(q[u])
        return actions

    def greedy_policy(self):
        """Frozen policy pi(s) = argmax_a Q(s, a) as a plain callable."""
        net = self.online.copy()

        def policy(observations: np.ndarray, masks: np.ndarray) -> np.ndarray:
            q = forward_dueling_batch(net, observations, masks)
            actions = np.where(masks.any(axis=1), np.argmax(q, axis=1), -1)
            return actions.astype(np.int64)

        return policy

    # -- learning -------------------------------------------------------------

    def learn_step(self, rng: np.random.Generator) -> float | None:
        """One sampled update; None when the buffer cannot fill a batch yet."""
        if len(self.buffer) < self.config.batch_size:
            return None
        batch = self.buffer.sample(self.config.batch_size, rng)
        y = compute_targets(self.online, self.target, batch["reward"],
                            batch["next_observation"], batch["next_mask"],
                            batch["terminal"], self.config.discount)
        masks = np.stack([mask_from_vector(o, self.k_max) for o in batch["observation"]])
        loss, grads = loss_and_gradient(self.online, batch["observation"],
                                        batch["action"], y, masks)
        params = optimizer_step(self.optimizer, flat_params(self.online),
                                flat_grads(self.online, grads))
        set_flat_params(self.online, params)
        self.learn_steps += 1
        if self.learn_steps % self.config.target_sync_every == 0:
            self.target.copy_from(self.online)
        return loss

    def warm_start(self, env: HandoverEnv, expert_actions, n_transitions: int,
                   weights: AdaptiveWeights, rate_norm_bps: float,
                   seed: int = 0) -> int:
        """Fill the buffer with expert rollouts; no network updates.

        `expert_actions(env) -> (U,) action array` is queried each slot.
        Returns the number of transitions stored.
        """
        stored = 0
        episode = 0
        while stored < n_transitions:
            obs = env.reset(seed=seed + episode)
            masks = env.valid_action_masks()
            while not env.done and stored < n_transitions:
                actions = expert_actions(env)
                outcome = env.step(actions)
                rewards = step_rewards(outcome, weights, rate_norm_bps)
                next_masks = env.valid_action_masks()
                for u in range(obs.shape[0]):
                    if actions[u] < 0 or not masks[u].any():
                        continue
                    self.buffer.push(obs[u], actions[u], rewards[u],
                                     outcome.observation[u], next_masks[u],
                                     outcome.done)
                    stored += 1
                    if stored >= n_transitions:
                        break
                obs = outcome.observation
                masks = next_masks
            episode += 1
        return stored

    def train(self, env: HandoverEnv, episodes: int, master_seed: int = 0,
              weights: AdaptiveWeights | None = None,
              targets: AdaptationTargets | None = None, eta: float = 0.5,
              rate_norm_bps: float | None = None, expert_actions=None,
              abort_dump_path=None) -> tuple[TrainingLog, AdaptiveWeights]:
        """Run the full training loop; returns the log and the final weights.

        All randomness (exploration, replay sampling, per-episode environment
        seeds) derives from `master_seed`.  A non-finite loss aborts with the
        online parameters dumped to `abort_dump_path` when given.
        """
        weights = AdaptiveWeights() if weights is None else weights
        targets = AdaptationTargets() if targets is None else targets
        rate_norm = env._rate_norm if rate_norm_bps is None else rate_norm_bps

        ss = np.random.SeedSequence((master_seed, 0xA9E27))
        explore_rng, sample_rng, env_seed_rng = (
            np.random.default_rng(child) for child in ss.spawn(3)
        )
        n_slots = env.scenario.n_slots
        if self.config.k_decay is None:
            k = max(episodes * n_slots / 3.0, 1.0)
            self.schedule = EpsilonSchedule(self.config.epsilon0,
                                            self.config.epsilon_min, k)

        if expert_actions is not None and self.config.warm_start_policy != "none" \
                and self.config.warm_start_transitions > 0:
            warm_seed = int(env_seed_rng.integers(2**31))
            self.warm_start(env, expert_actions, self.config.warm_start_transitions,
                            weights, rate_norm, seed=warm_seed)

        log = TrainingLog()
        for episode in range(episodes):
            obs = env.reset(seed=int(env_seed_rng.integers(2**31)))
            masks = env.valid_action_masks()
            reward_total = 0.0
            losses = []
            eps_last = epsilon_at(self.schedule, self.global_step)
            while not env.done:
                eps_last = epsilon_at(self.schedule, self.global_step)
                actions = self.select_actions(obs, masks, explore_rng, eps_last)
                outcome = env.step(actions)
                rewards = step_rewards(outcome, weights, rate_norm)
                next_masks = env.valid_action_masks()
                for u in range(obs.shape[0]):
                    if actions[u] < 0:
                        continue
                    self.buffer.push(obs[u], actions[u], rewards[u],
                                     outcome.observation[u], next_masks[u],
                                     outcome.done)
                reward_total += float(rewards[actions >= 0].sum())
                loss = self.learn_step(sample_rng)
                if loss is not None:
                    if not math.isfinite(loss):
                        if abort_dump_path is not None:
                            save_checkpoint(self.online, abort_dump_path)
                        raise TrainingError(
                            f"non-finite loss {loss} at episode {episode}, "
                            f"step {self.global_step}"
                        )
                    losses.append(loss)
                self.global_step += 1
                obs = outcome.observation
                masks = next_masks

            m = episode_metrics(env.trace())
            U = env.scenario.n_users
            log.append(
                episode=episode,
                mean_reward=reward_total / (U * n_slots),
                loss=float(np.mean(losses)) if losses else float("nan"),
                epsilon=eps_last,
                alpha=weights.alpha, beta=weights.beta, gamma=weights.gamma,
                blocking_rate=m.blocking_rate, handover_rate=m.handover_rate,
            )
            if weights.mode is WeightMode.ADAPTIVE:
                weights = adapt_weights(
                    weights, m.blocking_rate,
                    min(m.handover_rate / n_slots, 1.0), targets, eta,
                )
        return log, weights
