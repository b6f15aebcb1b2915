"""Slotted multi-user handover environment over a precomputed geometry table.

The association model is per-slot: every user requests one satellite each
slot, requests are admitted in a seeded random order against per-satellite
capacity, and a user whose request finds the satellite full is blocked for
that slot (zero rate, previous association label retained).  A user with no
visible satellite is out of coverage, which is not a blocking event.  A
handover is counted when an admitted user's satellite differs from its
previous association.

Actions are indices into the per-user candidate list (visible satellites
sorted by decreasing rate, ties to the lower satellite id, truncated to
`k_max` slots), which is also the layout of the observation vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LinkBudgetParams, rate_from_range
from .constellation import ConstellationSpec, GroundUser, visibility_tables
from .errors import ConfigurationError

FEATURES_PER_CANDIDATE = 5
N_GLOBAL_FEATURES = 2
# feature layout per candidate slot: [rate, residual capacity, remaining
# visibility, is-previous, valid mask]
MASK_OFFSET = 4

NO_SAT = -1


def observation_dim(k_max: int) -> int:
    return FEATURES_PER_CANDIDATE * k_max + N_GLOBAL_FEATURES


def mask_from_vector(observation: np.ndarray, k_max: int) -> np.ndarray:
    """Valid-slot mask encoded in an observation vector, shape (k_max,)."""
    flat = observation[: FEATURES_PER_CANDIDATE * k_max]
    return flat[MASK_OFFSET::FEATURES_PER_CANDIDATE] > 0.5


@dataclass(frozen=True)
class Scenario:
    """Episode geometry: per-slot achievable rates and visibility runs.

    rates_bps, visible, remaining_slots are all (T, U, S); rates are zero
    wherever not visible.  Satellite ids are the S-axis column indices.
    """

    rates_bps: np.ndarray
    visible: np.ndarray
    remaining_slots: np.ndarray
    slot_seconds: float

    def __post_init__(self):
        if self.rates_bps.shape != self.visible.shape != self.remaining_slots.shape:
            raise ConfigurationError("scenario tables must share one (T, U, S) shape")
        if self.slot_seconds <= 0:
            raise ConfigurationError(f"slot_seconds must be positive, got {self.slot_seconds}")

    @property
    def n_slots(self) -> int:
        return self.rates_bps.shape[0]

    @property
    def n_users(self) -> int:
        return self.rates_bps.shape[1]

    @property
    def n_sats(self) -> int:
        return self.rates_bps.shape[2]

    @classmethod
    def from_constellation(
        cls,
        spec: ConstellationSpec,
        users: list[GroundUser],
        n_slots: int,
        slot_seconds: float,
        link: LinkBudgetParams | None = None,
        min_elevation_deg: float | None = None,
    ) -> "Scenario":
        """Propagate the constellation and fill the rate table from the link
        budget (zero rate outside coverage)."""
        link = LinkBudgetParams() if link is None else link
        visible, ranges, remaining = visibility_tables(
            spec, users, n_slots, slot_seconds, min_elevation_deg=min_elevation_deg
        )
        rates = np.where(visible, rate_from_range(link, np.maximum(ranges, 1.0)), 0.0)
        return cls(rates_bps=rates, visible=visible,
                   remaining_slots=remaining, slot_seconds=slot_seconds)

    @classmethod
    def synthetic(cls, rates_bps: np.ndarray, slot_seconds: float = 10.0,
                  visible: np.ndarray | None = None) -> "Scenario":
        """Direct-table scenario for small deterministic setups; visibility
        defaults to strictly positive rate."""
        rates = np.asarray(rates_bps, dtype=np.float64)
        if rates.ndim != 3:
            raise ConfigurationError(f"rates table must be (T, U, S), got {rates.shape}")
        vis = rates > 0.0 if visible is None else np.asarray(visible, dtype=bool)
        from .constellation import consecutive_visible_slots

        return cls(rates_bps=np.where(vis, rates, 0.0), visible=vis,
                   remaining_slots=consecutive_visible_slots(vis),
                   slot_seconds=slot_seconds)


@dataclass(frozen=True)
class EnvConfig:
    """Capacity and observation shaping knobs."""

    capacity: int
    k_max: int = 8
    rate_norm_bps: float | None = None  # None: table maximum
    visibility_norm_slots: int | None = None  # None: table maximum
    blocking_ema_decay: float = 0.9

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigurationError(f"capacity must be >= 1, got {self.capacity}")
        if self.k_max < 1:
            raise ConfigurationError(f"k_max must be >= 1, got {self.k_max}")
        if not 0.0 <= self.blocking_ema_decay < 1.0:
            raise ConfigurationError(
                f"blocking_ema_decay must be in [0, 1), got {self.blocking_ema_decay}"
            )
        if self.rate_norm_bps is not None and self.rate_norm_bps <= 0:
            raise ConfigurationError("rate_norm_bps must be positive")


@dataclass(frozen=True)
class CandidateView:
    """One candidate as a selector sees it at decision time."""

    sat_id: int
    rate_bps: float
    remaining_slots: int
    residual_fraction: float
    is_previous: bool


@dataclass(frozen=True)
class DecisionContext:
    """Everything a hand-crafted policy may look at for one user."""

    slot: int
    user: int
    candidates: tuple[CandidateView, ...]
    prev_sat: int
    capacity: int
    prev_loads: np.ndarray
    scenario: Scenario


@dataclass
class StepOutcome:
    observation: np.ndarray  # (U, obs_dim), zeros once done
    rate_bps: np.ndarray
    serving_sat: np.ndarray  # NO_SAT where unassociated
    admitted: np.ndarray
    blocked: np.ndarray
    handover: np.ndarray
    out_of_coverage: np.ndarray
    invalid_action: np.ndarray
    slot: int
    done: bool


@dataclass
class EpisodeTrace:
    """Per-slot, per-user record of one rolled-out episode, all (T, U)."""

    chosen_sat: np.ndarray
    serving_sat: np.ndarray
    admitted: np.ndarray
    blocked: np.ndarray
    handover: np.ndarray
    out_of_coverage: np.ndarray
    invalid_action: np.ndarray
    rate_bps: np.ndarray
    slot_seconds: float

    @property
    def n_slots(self) -> int:
        return self.rate_bps.shape[0]

    @property
    def n_users(self) -> int:
        return self.rate_bps.shape[1]


@dataclass(frozen=True)
class EpisodeMetrics:
    """Network-level episode summary."""

    throughput_bps: float  # mean over slots of the summed admitted rate
    blocking_rate: float  # blocked events over user-slots
    handover_rate: float  # handovers per user over the episode

    def as_dict(self) -> dict:
        return {
            "throughput_bps": self.throughput_bps,
            "blocking_rate": self.blocking_rate,
            "handover_rate": self.handover_rate,
        }


def episode_metrics(trace: EpisodeTrace) -> EpisodeMetrics:
    T, U = trace.n_slots, trace.n_users
    return EpisodeMetrics(
        throughput_bps=float(trace.rate_bps.sum()) / T,
        blocking_rate=float(trace.blocked.sum()) / (U * T),
        handover_rate=float(trace.handover.sum()) / U,
    )


def write_trace_csv(trace: EpisodeTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("slot,user,chosen_sat,admitted,blocked,handover,rate_bps\n")
        for t in range(trace.n_slots):
            for u in range(trace.n_users):
                fh.write(
                    f"{t},{u},{int(trace.chosen_sat[t, u])},"
                    f"{int(trace.admitted[t, u])},{int(trace.blocked[t, u])},"
                    f"{int(trace.handover[t, u])},{float(trace.rate_bps[t, u])!r}\n"
                )


class HandoverEnv:
    """Synchronous multi-user environment; `step` takes one action per user."""

    def __init__(self, scenario: Scenario, config: EnvConfig, seed: int = 0):
        self.scenario = scenario
        self.config = config
        self._seed = seed
        self._rate_norm = (
            config.rate_norm_bps
            if config.rate_norm_bps is not None
            else max(float(scenario.rates_bps.max()), 1.0)
        )
        self._vis_norm = (
            config.visibility_norm_slots
            if config.visibility_norm_slots is not None
            else max(int(scenario.remaining_slots.max()), 1)
        )
        self.obs_dim = observation_dim(config.k_max)
        self.reset(seed)

    # -- episode control ------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._seed = seed
        self._rng = np.random.default_rng(self._seed)
        self._slot = 0
        self._done = False
        U, S = self.scenario.n_users, self.scenario.n_sats
        self._prev_serving = np.full(U, NO_SAT, dtype=np.int64)
        self._prev_loads = np.zeros(S, dtype=np.int64)
        self._blocking_ema = 0.0
        self._candidate_cache: tuple[int, list[np.ndarray]] | None = None
        self._records: list[dict] = []
        self.counters = {"blocked": 0, "handover": 0, "invalid_action": 0, "no_coverage": 0}
        return self.observations()

    @property
    def slot(self) -> int:
        return self._slot

    @property
    def done(self) -> bool:
        return self._done

    def network_state(self) -> dict:
        return {
            "slot": self._slot,
            "serving": self._prev_serving.copy(),
            "loads": self._prev_loads.copy(),
            "blocking_ema": self._blocking_ema,
        }

    # -- candidate bookkeeping ------------------------------------------------

    def _candidates_now(self) -> list[np.ndarray]:
        """Per-user arrays of candidate sat ids for the current slot, each
        sorted by decreasing rate then increasing id and cut to k_max."""
        if self._candidate_cache is not None and self._candidate_cache[0] == self._slot:
            return self._candidate_cache[1]
        t = self._slot
        out = []
        for u in range(self.scenario.n_users):
            sats = np.flatnonzero(self.scenario.visible[t, u])
            if sats.size:
                order = np.lexsort((sats, -self.scenario.rates_bps[t, u, sats]))
                sats = sats[order][: self.config.k_max]
            out.append(sats)
        self._candidate_cache = (t, out)
        return out

    def candidate_sats(self, user: int) -> np.ndarray:
        return self._candidates_now()[user]

    def decision_context(self, user: int) -> DecisionContext:
        t, cap = self._slot, self.config.capacity
        views = tuple(
            CandidateView(
                sat_id=int(s),
                rate_bps=float(self.scenario.rates_bps[t, user, s]),
                remaining_slots=int(self.scenario.remaining_slots[t, user, s]),
                residual_fraction=max(cap - int(self._prev_loads[s]), 0) / cap,
                is_previous=bool(s == self._prev_serving[user]),
            )
            for s in self._candidates_now()[user]
        )
        return DecisionContext(
            slot=t, user=user, candidates=views,
            prev_sat=int(self._prev_serving[user]), capacity=cap,
            prev_loads=self._prev_loads.copy(), scenario=self.scenario,
        )

    def decision_contexts(self) -> list[DecisionContext]:
        return [self.decision_context(u) for u in range(self.scenario.n_users)]

    def action_for_sat(self, user: int, sat_id: int) -> int:
        """Candidate-slot index of `sat_id` for `user` at the current slot."""
        cands = self._candidates_now()[user]
        hits = np.flatnonzero(cands == sat_id)
        if not hits.size:
            raise ValueError(f"sat {sat_id} not a candidate of user {user} at slot {self._slot}")
        return int(hits[0])

    # -- observation ----------------------------------------------------------

    def observations(self) -> np.ndarray:
        U, K = self.scenario.n_users, self.config.k_max
        obs = np.zeros((U, self.obs_dim))
        if self._done:
            return obs
        t, cap = self._slot, self.config.capacity
        cands = self._candidates_now()
        for u in range(U):
            for k, s in enumerate(cands[u]):
                base = k * FEATURES_PER_CANDIDATE
                obs[u, base] = min(self.scenario.rates_bps[t, u, s] / self._rate_norm, 1.0)
                obs[u, base + 1] = max(cap - self._prev_loads[s], 0) / cap
                obs[u, base + 2] = min(self.scenario.remaining_slots[t, u, s] / self._vis_norm, 1.0)
                obs[u, base + 3] = 1.0 if s == self._prev_serving[u] else 0.0
                obs[u, base + MASK_OFFSET] = 1.0
        obs[:, -2] = t / self.scenario.n_slots
        obs[:, -1] = self._blocking_ema
        return obs

    def valid_action_masks(self) -> np.ndarray:
        masks = np.zeros((self.scenario.n_users, self.config.k_max), dtype=bool)
        if self._done:
            return masks
        for u, c in enumerate(self._candidates_now()):
            masks[u, : len(c)] = True
        return masks

    # -- transition -----------------------------------------------------------

    def step(self, actions) -> StepOutcome:
        if self._done:
            raise RuntimeError("episode finished; call reset()")
        actions = np.asarray(actions, dtype=np.int64)
        U, S = self.scenario.n_users, self.scenario.n_sats
        if actions.shape != (U,):
            raise ValueError(f"expected {U} actions, got shape {actions.shape}")
        t, cap = self._slot, self.config.capacity
        cands = self._candidates_now()

        chosen = np.full(U, NO_SAT, dtype=np.int64)
        nocov = np.zeros(U, dtype=bool)
        invalid = np.zeros(U, dtype=bool)
        for u in range(U):
            if len(cands[u]) == 0:
                nocov[u] = True
            elif 0 <= actions[u] < len(cands[u]):
                chosen[u] = cands[u][actions[u]]
            else:
                invalid[u] = True

        admitted = np.zeros(U, dtype=bool)
        blocked = invalid.copy()  # a malformed request is refused outright
        loads = np.zeros(S, dtype=np.int64)
        for u in self._rng.permutation(U):
            s = chosen[u]
            if s == NO_SAT:
                continue
            if loads[s] < cap:
                loads[s] += 1
                admitted[u] = True
            else:
                blocked[u] = True

        handover = admitted & (self._prev_serving != NO_SAT) & (chosen != self._prev_serving)
        rate = np.where(admitted, self.scenario.rates_bps[t, np.arange(U), chosen], 0.0)

        serving = self._prev_serving.copy()  # blocked users keep their label
        serving[admitted] = chosen[admitted]
        serving[nocov] = NO_SAT

        self.counters["blocked"] += int(blocked.sum())
        self.counters["handover"] += int(handover.sum())
        self.counters["invalid_action"] += int(invalid.sum())
        self.counters["no_coverage"] += int(nocov.sum())

        d = self.config.blocking_ema_decay
        self._blocking_ema = d * self._blocking_ema + (1.0 - d) * blocked.sum() / U
        self._prev_serving = serving
        self._prev_loads = loads
        self._records.append({
            "chosen_sat": chosen, "serving_sat": serving.copy(), "admitted": admitted,
            "blocked": blocked, "handover": handover, "out_of_coverage": nocov,
            "invalid_action": invalid, "rate_bps": rate,
        })

        self._slot += 1
        self._done = self._slot >= self.scenario.n_slots
        return StepOutcome(
            observation=self.observations(), rate_bps=rate, serving_sat=serving.copy(),
            admitted=admitted, blocked=blocked, handover=handover,
            out_of_coverage=nocov, invalid_action=invalid,
            slot=t, done=self._done,
        )

    def trace(self) -> EpisodeTrace:
        """Record of the slots stepped so far."""
        if not self._records:
            raise RuntimeError("no slots stepped yet")
        stack = {k: np.stack([r[k] for r in self._records]) for k in self._records[0]}
        return EpisodeTrace(slot_seconds=self.scenario.slot_seconds, **stack)
