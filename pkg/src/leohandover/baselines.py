"""Hand-crafted handover policies and a brute-force optimum for tiny cases.

The selectors are pure functions of a per-user DecisionContext snapshot and
return a satellite id (not an action slot); `make_policy` adapts them to the
environment's candidate-slot action space.  Their decision rules:

  mvt    longest remaining visibility, ties to higher rate then lower id
  mac    most residual capacity, ties to higher rate then lower id
  gbw    first hop of the best path through a time-expanded score graph
         (rate gain minus load and switch penalties over a short window)
  msh    keep the serving satellite while visible, otherwise the candidate
         staying visible longest within the window
  mshbo  msh over the non-full candidates, falling back to plain msh when
         every candidate is full

The enumeration oracle walks every feasible association sequence of a tiny
scenario and maximizes the scalarized network objective, giving an upper
bound no policy can beat.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .environment import DecisionContext, HandoverEnv, Scenario
from .errors import ConfigurationError, NoCandidateError
from .reward import StaticObjectiveParams


class PolicyKind(enum.Enum):
    RANDOM = "random"
    MVT = "mvt"
    MAC = "mac"
    GBW = "gbw"
    MSH = "msh"
    MSHBO = "mshbo"
    TRAINED = "trained"


@dataclass(frozen=True)
class GbwConfig:
    """Score weights and horizon of the time-expanded path search."""

    w_rate: float = 1.0
    w_handover: float = 0.3
    w_block: float = 0.5
    window_slots: int = 6

    def __post_init__(self):
        if self.window_slots < 1:
            raise ConfigurationError(f"window must be >= 1, got {self.window_slots}")


@dataclass(frozen=True)
class LookaheadWindow:
    """Predicted per-satellite visibility and rates for one user over the
    next few slots, sliced straight from the deterministic geometry tables."""

    start_slot: int
    visible: np.ndarray  # (W, S)
    rates_bps: np.ndarray  # (W, S)

    @property
    def n_slots(self) -> int:
        return self.visible.shape[0]

    @classmethod
    def for_user(cls, scenario: Scenario, user: int, slot: int,
                 window_slots: int) -> "LookaheadWindow":
        if window_slots < 1:
            raise ConfigurationError(f"window must be >= 1, got {window_slots}")
        end = min(slot + window_slots, scenario.n_slots)
        return cls(start_slot=slot,
                   visible=scenario.visible[slot:end, user],
                   rates_bps=scenario.rates_bps[slot:end, user])


def _require_candidates(context: DecisionContext):
    if not context.candidates:
        raise NoCandidateError(
            f"user {context.user} has no visible satellite at slot {context.slot}"
        )
    return context.candidates


def random_select(context: DecisionContext, rng: np.random.Generator) -> int:
    cands = _require_candidates(context)
    return cands[rng.integers(len(cands))].sat_id


def mvt_select(context: DecisionContext) -> int:
    cands = _require_candidates(context)
    best = max(cands, key=lambda c: (c.remaining_slots, c.rate_bps, -c.sat_id))
    return best.sat_id


def mac_select(context: DecisionContext) -> int:
    cands = _require_candidates(context)
    best = max(cands, key=lambda c: (c.residual_fraction, c.rate_bps, -c.sat_id))
    return best.sat_id


def msh_select(context: DecisionContext, window_slots: int = 6) -> int:
    cands = _require_candidates(context)
    for c in cands:
        if c.sat_id == context.prev_sat:
            return c.sat_id
    best = max(cands, key=lambda c: (min(c.remaining_slots, window_slots),
                                     c.rate_bps, -c.sat_id))
    return best.sat_id


def mshbo_select(context: DecisionContext, window_slots: int = 6) -> int:
    cands = _require_candidates(context)
    open_cands = [c for c in cands if c.residual_fraction > 0.0]
    if not open_cands:
        return msh_select(context, window_slots)
    for c in open_cands:
        if c.sat_id == context.prev_sat:
            return c.sat_id
    best = max(open_cands, key=lambda c: (min(c.remaining_slots, window_slots),
                                          c.rate_bps, -c.sat_id))
    return best.sat_id


def gbw_select(context: DecisionContext, config: GbwConfig | None = None) -> int:
    """Best first hop of a max-score path over (slot, satellite) nodes.

    Node score trades normalized rate against the current load of the
    satellite (loads frozen over the window: the simplest causal predictor);
    every switch along the path, including the first hop away from the
    current serving satellite, pays the handover weight.  First-hop ties
    prefer the serving satellite, then the lower id.
    """
    cands = _require_candidates(context)
    cfg = GbwConfig() if config is None else config
    window = LookaheadWindow.for_user(context.scenario, context.user,
                                      context.slot, cfg.window_slots)
    rate_norm = max(float(context.scenario.rates_bps.max()), 1.0)
    util = np.minimum(context.prev_loads / context.capacity, 1.0)
    score = (cfg.w_rate * window.rates_bps / rate_norm
             - cfg.w_block * util[None, :])

    W, S = window.visible.shape
    # value[s]: best path score from slot k on while serving s at k; gap is
    # the unserved alternative (zero score, free to re-acquire), which keeps
    # coverage holes inside the window from sinking every path to -inf
    value = np.where(window.visible[W - 1], score[W - 1], -np.inf)
    gap = 0.0
    for k in range(W - 2, -1, -1):
        best_next = value.max()
        cont = np.maximum(value, max(best_next - cfg.w_handover, gap))
        value = np.where(window.visible[k], score[k] + cont, -np.inf)
        gap = max(gap, best_next)

    ordered = sorted(cands, key=lambda c: (c.sat_id != context.prev_sat, c.sat_id))
    best_sat, best_val = None, -np.inf
    for c in ordered:
        v = value[c.sat_id]
        if context.prev_sat >= 0 and c.sat_id != context.prev_sat:
            v -= cfg.w_handover
        if v > best_val:
            best_sat, best_val = c.sat_id, v
    return best_sat


_SELECTOR_WINDOW_DEFAULT = 6


def make_policy(kind: PolicyKind | str, seed: int = 0,
                gbw_config: GbwConfig | None = None,
                window_slots: int = _SELECTOR_WINDOW_DEFAULT):
    """Adapter from a selector to `fn(env) -> (U,) action array`.

    Users without candidates get action -1 (the environment records them as
    out of coverage regardless of the value).
    """
    kind = PolicyKind(kind)
    if kind is PolicyKind.TRAINED:
        raise ConfigurationError("trained policies come from an agent checkpoint")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xBA5E)))

    def actions_fn(env: HandoverEnv) -> np.ndarray:
        n_users = env.scenario.n_users
        actions = np.full(n_users, -1, dtype=np.int64)
        for u in range(n_users):
            context = env.decision_context(u)
            if not context.candidates:
                continue
            if kind is PolicyKind.RANDOM:
                sat = random_select(context, rng)
            elif kind is PolicyKind.MVT:
                sat = mvt_select(context)
            elif kind is PolicyKind.MAC:
                sat = mac_select(context)
            elif kind is PolicyKind.GBW:
                sat = gbw_select(context, gbw_config)
            elif kind is PolicyKind.MSH:
                sat = msh_select(context, window_slots)
            else:
                sat = mshbo_select(context, window_slots)
            actions[u] = env.action_for_sat(u, sat)
        return actions

    return actions_fn


# --- exhaustive optimum for tiny instances -----------------------------------

ORACLE_MAX_USERS = 3
ORACLE_MAX_SATS = 4
ORACLE_MAX_SLOTS = 4

_BLOCKED = -2  # deliberate no-service choice: blocking event, label kept
_NONE = -1  # unassociated label / out of coverage


def oracle_enumerate(scenario: Scenario, capacity: int,
                     params: StaticObjectiveParams,
                     rate_norm_bps: float = 1.0) -> tuple[float, list]:
    """Maximum of the scalarized objective over every feasible association
    sequence of a tiny scenario, with the same bookkeeping the environment
    uses (blocked users keep their previous label at zero rate, coverage
    gaps clear it).

    Returns (best value, per-slot label tuples); labels are sat ids with -1
    for unserved.  Voluntary blocking is part of the search space, so the
    result upper-bounds any admission-order outcome.
    """
    T, U, S = scenario.n_slots, scenario.n_users, scenario.n_sats
    if U > ORACLE_MAX_USERS or S > ORACLE_MAX_SATS or T > ORACLE_MAX_SLOTS:
        raise ConfigurationError(
            f"instance ({U} users, {S} sats, {T} slots) exceeds enumeration "
            f"bounds ({ORACLE_MAX_USERS}, {ORACLE_MAX_SATS}, {ORACLE_MAX_SLOTS})"
        )
    if capacity < 1:
        raise ConfigurationError(f"capacity must be >= 1, got {capacity}")

    per_user_slot = 1.0 / (U * T)

    def joint_choices(t: int):
        options = []
        for u in range(U):
            sats = np.flatnonzero(scenario.visible[t, u])
            if sats.size:
                options.append([int(s) for s in sats] + [_BLOCKED])
            else:
                options.append([_NONE])
        for combo in itertools.product(*options):
            loads = {}
            for s in combo:
                if s >= 0:
                    loads[s] = loads.get(s, 0) + 1
            if all(n <= capacity for n in loads.values()):
                yield combo

    # states: previous serving label per user (sat id or _NONE)
    start = tuple([_NONE] * U)
    frontier = {start: (0.0, [])}
    for t in range(T):
        nxt: dict = {}
        choices = list(joint_choices(t))
        for prev_labels, (value, path) in frontier.items():
            for combo in choices:
                gain = 0.0
                labels = []
                for u, s in enumerate(combo):
                    if s >= 0:
                        gain += scenario.rates_bps[t, u, s] / (T * rate_norm_bps)
                        if prev_labels[u] != _NONE and prev_labels[u] != s:
                            gain -= params.lambda2 / U
                        labels.append(s)
                    elif s == _BLOCKED:
                        gain -= params.lambda1 * per_user_slot
                        labels.append(prev_labels[u])
                    else:
                        labels.append(_NONE)
                key = tuple(labels)
                cand_value = value + gain
                if key not in nxt or cand_value > nxt[key][0]:
                    nxt[key] = (cand_value, path + [tuple(
                        s if s >= 0 else _NONE for s in combo
                    )])
        frontier = nxt

    best_value, best_path = max(frontier.values(), key=lambda vp: vp[0])
    return best_value, best_path
