"""Release acceptance gates.

Every test here checks one end-to-end guarantee of the package at its stated
tolerance and prints a single PASS/FAIL verdict line straight to the
terminal (bypassing capture), so a full run reads as a checklist.  The
scenarios are sized to keep the whole file comfortably inside its runtime
budgets on a laptop-class machine.
"""

import dataclasses
import math
import time
from pathlib import Path

import numpy as np

from leohandover.agent import AgentConfig, EpsilonSchedule, compute_targets, epsilon_at
from leohandover.baselines import PolicyKind, make_policy
from leohandover.constellation import ConstellationSpec
from leohandover.environment import (
    EnvConfig,
    HandoverEnv,
    Scenario,
    episode_metrics,
    observation_dim,
)
from leohandover.experiments import (
    ExperimentConfig,
    UserPlacement,
    build_cell,
    load_config,
    oracle_validation_suite,
    run_cell,
    run_sweep,
    train_cell,
)
from leohandover.baselines import oracle_enumerate
from leohandover.neuralnet import (
    DenseNet,
    DuelingQNet,
    forward_dueling_batch,
    gradient_check,
)
from leohandover.reward import StaticObjectiveParams, scalarized_objective

_CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _verdict(capsys, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert ok, line


def _const_q_net(obs_dim, k, v_bias, adv_bias):
    trunk = DenseNet([np.zeros((4, obs_dim))], [np.zeros(4)], output_relu=True)
    value = DenseNet([np.zeros((1, 4))], [np.array([float(v_bias)])])
    adv = DenseNet([np.zeros((k, 4))], [np.asarray(adv_bias, dtype=float)])
    return DuelingQNet(trunk, value, adv)


def test_environment_never_violates_capacity_or_single_association(capsys):
    rng = np.random.default_rng(2024)
    steps = 0
    capacity_violations = 0
    association_violations = 0

    def hammer(env, episodes, k_max):
        nonlocal steps, capacity_violations, association_violations
        S = env.scenario.n_sats
        U = env.scenario.n_users
        for ep in range(episodes):
            env.reset(seed=int(rng.integers(2**31)))
            while not env.done:
                actions = rng.integers(-1, k_max + 2, size=U)
                out = env.step(actions)
                steps += 1
                served = out.serving_sat[out.admitted]
                if served.size:
                    loads = np.bincount(served, minlength=S)
                    if loads.max() > env.config.capacity:
                        capacity_violations += 1
                # an admitted user occupies exactly its one chosen satellite,
                # everyone else holds no channel at all this slot
                t = out.slot
                vis_ok = env.scenario.visible[t, np.flatnonzero(out.admitted),
                                              served]
                if not vis_ok.all():
                    association_violations += 1
                if out.rate_bps[~out.admitted].any():
                    association_violations += 1

    while steps < 10_000:
        T = int(rng.integers(15, 31))
        U = int(rng.integers(2, 7))
        S = int(rng.integers(3, 9))
        vis = rng.random((T, U, S)) < 0.7
        rates = rng.random((T, U, S)) * vis * 6.0e7
        sc = Scenario.synthetic(rates, 10.0, visible=vis)
        env = HandoverEnv(
            sc, EnvConfig(capacity=int(rng.integers(1, 4)), k_max=min(8, S),
                          rate_norm_bps=6.0e7),
            seed=int(rng.integers(2**31)),
        )
        hammer(env, 1, min(8, S))

    desk = load_config(_CONFIG_DIR / "desk.yaml")
    env, _ = build_cell(desk, 4, 1, 0)
    hammer(env, 2, desk.k_max)

    ok = capacity_violations == 0 and association_violations == 0
    _verdict(capsys, "environment invariants", ok,
             f"{steps} random steps, {capacity_violations} capacity and "
             f"{association_violations} association violations")


def test_dueling_head_is_invariant_to_advantage_shifts(capsys):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        obs_dim = int(rng.integers(6, 20))
        k = int(rng.integers(2, 9))
        net = DuelingQNet.create(obs_dim, k, rng, trunk_dims=(8,), stream_dims=(6,))
        obs = rng.normal(size=(3, obs_dim))
        mask = rng.random((3, k)) < 0.7
        mask[np.arange(3), rng.integers(k, size=3)] = True
        q1 = forward_dueling_batch(net, obs, mask)
        shift = float(rng.normal()) * 10.0 ** int(rng.integers(-3, 4))
        net.advantage.biases[-1] += shift
        q2 = forward_dueling_batch(net, obs, mask)
        rel = np.abs(q2[mask] - q1[mask]) / np.maximum(np.abs(q1[mask]), 1.0)
        worst = max(worst, float(rel.max()))
    ok = worst <= 1e-9
    _verdict(capsys, "advantage-shift invariance", ok,
             f"1000 nets, worst relative Q change {worst:.3e} (tol 1e-9)")


def test_analytic_gradients_match_finite_differences(capsys):
    t0 = time.perf_counter()
    err = gradient_check(n_instances=20, step=1e-5, seed=11)
    wall = time.perf_counter() - t0
    ok = err < 1e-4 and wall < 30.0
    _verdict(capsys, "gradient check", ok,
             f"20 instances, max relative error {err:.3e} (tol 1e-4), "
             f"{wall:.1f}s (budget 30s)")


def test_bootstrap_targets_decouple_selection_from_valuation(capsys):
    k, dim = 2, observation_dim(2)
    online = _const_q_net(dim, k, 1.5, [-0.5, 0.5])    # Q = [1, 2]
    target = _const_q_net(dim, k, 6.5, [3.5, -3.5])    # Q = [10, 3]
    rewards = np.array([0.5, -0.2, 1.0])
    masks = np.ones((3, k), dtype=bool)
    terminal = np.array([False, False, True])
    y = compute_targets(online, target, rewards, np.zeros((3, dim)), masks,
                        terminal, 0.99)
    # online picks slot 1; the target prices it at 3, not at its own best 10
    ok = (y[0] == 0.5 + 0.99 * 3.0 and y[1] == -0.2 + 0.99 * 3.0 and y[2] == 1.0)
    y_masked = compute_targets(online, target, np.array([0.0]),
                               np.zeros((1, dim)), np.array([[True, False]]),
                               np.array([False]), 0.99)
    ok = ok and y_masked[0] == 0.99 * 6.5
    y_empty = compute_targets(online, target, np.array([0.7]),
                              np.zeros((1, dim)), np.zeros((1, k), dtype=bool),
                              np.array([False]), 0.99)
    ok = ok and y_empty[0] == 0.7
    _verdict(capsys, "double-estimator targets", ok,
             f"y = {y.tolist()} (expected [3.47, 2.77, 1.0]), masked {y_masked[0]}, "
             f"terminal/empty exact")


def test_exploration_schedule_hits_exact_anchors(capsys):
    s = EpsilonSchedule(epsilon0=0.2, epsilon_min=0.01, k_decay=2000.0)
    start = epsilon_at(s, 0)
    at_k = epsilon_at(s, 2000)
    floor = epsilon_at(s, 10**9)
    drift = abs(at_k - 0.2 * math.exp(-1.0))
    sampled = [epsilon_at(s, t) for t in range(0, 40_000, 97)]
    ok = (start == 0.2 and floor == 0.01 and drift <= 1e-12
          and min(sampled) >= 0.01
          and all(a >= b for a, b in zip(sampled, sampled[1:])))
    _verdict(capsys, "exploration schedule", ok,
             f"eps(0)={start}, |eps(K)-0.2/e|={drift:.2e} (tol 1e-12), "
             f"floor={floor}")


def test_enumeration_optimum_dominates_every_policy(capsys):
    t0 = time.perf_counter()
    summary = oracle_validation_suite(n_instances=50, seed=17)

    # equality witness: one user, everything visible, no penalties; the
    # residual-then-rate greedy reduces to pure rate chasing and is optimal
    rng = np.random.default_rng(99)
    rates = rng.random((3, 1, 3)) + 0.1
    sc = Scenario.synthetic(rates, 1.0)
    params = StaticObjectiveParams(0.0, 0.0)
    best, _ = oracle_enumerate(sc, 1, params, rate_norm_bps=1.0)
    env = HandoverEnv(sc, EnvConfig(capacity=1, k_max=3, rate_norm_bps=1.0), seed=0)
    policy = make_policy(PolicyKind.MAC, seed=0)
    while not env.done:
        env.step(policy(env))
    achieved = scalarized_objective(episode_metrics(env.trace()), params,
                                    rate_norm_bps=1.0)
    wall = time.perf_counter() - t0
    equality = abs(best - achieved) <= 1e-9
    ok = (summary["dominated"] and summary["instances"] >= 50 and equality
          and wall < 60.0)
    _verdict(capsys, "enumeration dominance", ok,
             f"{summary['instances']} instances, min gap {summary['min_gap']:.2e} "
             f">= -1e-9, greedy equality gap {abs(best - achieved):.2e}, "
             f"{wall:.1f}s (budget 60s)")


def test_learned_policy_beats_random_and_best_heuristic(capsys, tmp_path):
    t0 = time.perf_counter()
    cfg = load_config(_CONFIG_DIR / "desk.yaml")
    cfg = dataclasses.replace(cfg, users_sweep=(4,), capacity_sweep=(1,),
                              repetitions=5)
    train_cell(cfg, 4, 1, tmp_path, tmp_path / "ckpt")
    vals = {}
    for policy in ("trained", "random", "mvt", "mac"):
        vals[policy] = np.array([
            run_cell(cfg, policy, 4, 1, rep,
                     checkpoint_dir=tmp_path / "ckpt").episode_reward
            for rep in range(5)
        ])
    diffs = vals["trained"] - vals["random"]
    margin = float(diffs.mean())
    spread = float(diffs.std())
    best_heuristic = max(vals["mvt"].mean(), vals["mac"].mean())
    wall = time.perf_counter() - t0
    ok = (spread > 0 and margin >= 3.0 * spread
          and vals["trained"].mean() > best_heuristic
          and wall < 600.0)
    _verdict(capsys, "learning efficacy", ok,
             f"trained {vals['trained'].mean():.1f} vs random "
             f"{vals['random'].mean():.1f} over 5 seeds "
             f"(margin {margin:.1f} = {margin / spread:.1f} seed-level std, "
             f"need >= 3), best heuristic {best_heuristic:.1f}, "
             f"{wall:.0f}s (budget 600s)")


def test_blocking_grows_with_load_and_learned_stays_below(capsys, tmp_path):
    t0 = time.perf_counter()
    base = ConstellationSpec.telesat_like()
    cfg = ExperimentConfig(
        users_sweep=(10, 15, 20, 25, 30), capacity_sweep=(5,),
        episodes=40, repetitions=3, episode_seconds=900.0, slot_seconds=10.0,
        policies=("mac", "trained"), master_seed=11,
        constellation=ConstellationSpec(shells=base.shells, min_elevation_deg=40.0),
        placement=UserPlacement(45.0, 10.0, 1.0),
        agent=AgentConfig(batch_size=64, target_sync_every=250,
                          replay_capacity=20000, warm_start_transitions=1000,
                          trunk_dims=(64, 64), stream_dims=(32,)),
    )
    mac_means, trained_means = [], []
    for users in cfg.users_sweep:
        train_cell(cfg, users, 5, tmp_path, tmp_path / "ckpt")
        mac, trained = [], []
        for rep in range(cfg.repetitions):
            env, _ = build_cell(cfg, users, 5, rep)
            mac.append(run_cell(cfg, "mac", users, 5, rep, env=env).blocking_prob)
            trained.append(run_cell(cfg, "trained", users, 5, rep,
                                    checkpoint_dir=tmp_path / "ckpt",
                                    env=env).blocking_prob)
        mac_means.append(float(np.mean(mac)))
        trained_means.append(float(np.mean(trained)))
    wall = time.perf_counter() - t0
    monotone = all(b >= a - 1e-12 for a, b in zip(mac_means, mac_means[1:]))
    below = all(t <= m for t, m in zip(trained_means, mac_means))
    ok = monotone and below and wall < 1800.0
    fmt = lambda xs: "[" + ", ".join(f"{x:.3f}" for x in xs) + "]"
    _verdict(capsys, "load trend", ok,
             f"capacity 5, users 10..30: residual-greedy blocking "
             f"{fmt(mac_means)} non-decreasing={monotone}, learned "
             f"{fmt(trained_means)} below everywhere={below}, "
             f"{wall:.0f}s (budget 1800s)")


def test_sweep_outputs_are_byte_reproducible(capsys, tmp_path):
    cfg = load_config(_CONFIG_DIR / "desk.yaml")
    cfg = dataclasses.replace(cfg, repetitions=2,
                              policies=("mvt", "mac", "mshbo"))
    run_sweep(cfg, tmp_path / "a")
    run_sweep(cfg, tmp_path / "b")
    raw_a = (tmp_path / "a" / "raw_results.csv").read_bytes()
    raw_b = (tmp_path / "b" / "raw_results.csv").read_bytes()
    agg_a = (tmp_path / "a" / "aggregate_results.csv").read_bytes()
    agg_b = (tmp_path / "b" / "aggregate_results.csv").read_bytes()
    ok = raw_a == raw_b and agg_a == agg_b
    _verdict(capsys, "sweep reproducibility", ok,
             f"two desk sweeps, raw CSV {len(raw_a)} bytes identical={raw_a == raw_b}, "
             f"aggregate identical={agg_a == agg_b}")
