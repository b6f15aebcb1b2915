"""Sweep plumbing: config parsing, seeded cell construction, CSV schemas,
determinism of the raw results, and the command line front end."""

import numpy as np
import pytest

from leohandover.cli import main
from leohandover.constellation import ConstellationSpec, OrbitalShell
from leohandover.environment import observation_dim
from leohandover.errors import ConfigurationError
from leohandover.experiments import (
    AGGREGATE_COLUMNS,
    RAW_COLUMNS,
    ExperimentConfig,
    ResultRow,
    _cell_streams,
    aggregate_rows,
    build_cell,
    checkpoint_path,
    load_config,
    oracle_validation_suite,
    place_users,
    run_cell,
    run_sweep,
    train_cell,
)
from leohandover.neuralnet import load_checkpoint

_SMALL_SHELL = {
    "altitude_km": 1015.0, "inclination_deg": 85.0,
    "plane_count": 8, "sats_per_plane": 8, "raan_spread_deg": 360.0,
}


def _small_config(**overrides):
    base = dict(
        users_sweep=(3,), capacity_sweep=(1,), episodes=2, repetitions=2,
        episode_seconds=120.0, slot_seconds=10.0, policies=("mvt", "mac"),
        master_seed=5,
        constellation=ConstellationSpec(
            shells=(OrbitalShell(1015.0, 85.0, 8, 8),), min_elevation_deg=10.0,
        ),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_from_dict_coerces_and_rejects_unknown_keys():
    cfg = ExperimentConfig.from_dict({
        "users_sweep": [4, 8],
        "capacity_sweep": [1],
        "episodes": "10",
        "repetitions": 2,
        "episode_seconds": "1200",
        "slot_seconds": 10,
        "policies": ["mvt"],
        "constellation": {"shells": [_SMALL_SHELL], "min_elevation_deg": 15},
        "users": {"center_lat_deg": "44.5", "radius_deg": 2},
        "link": {"bandwidth_hz": "2.0e7", "carrier_ghz": 12.0},
        "reward": {"rate_norm_bps": "6.6e7", "lambda2": "0.5"},
        "agent": {"batch_size": "64", "learning_rate": "1e-3",
                  "trunk_dims": [32, 32]},
        "gbw": {"w_handover": "0.3"},
    })
    assert cfg.users_sweep == (4, 8) and cfg.episodes == 10
    assert isinstance(cfg.episode_seconds, float) and cfg.n_slots == 120
    assert cfg.constellation.sat_count == 64
    assert cfg.placement.center_lat_deg == 44.5
    assert cfg.link.bandwidth_hz == 2.0e7
    assert cfg.reward.rate_norm_bps == 6.6e7
    assert cfg.agent.batch_size == 64 and cfg.agent.trunk_dims == (32, 32)
    assert cfg.gbw.w_handover == 0.3
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"user_sweep": [4]})


def test_from_dict_telesat_shortcut_and_elevation_override():
    cfg = ExperimentConfig.from_dict({"constellation": "telesat",
                                      "min_elevation_deg": 40})
    assert cfg.constellation.sat_count == 298
    assert cfg.constellation.min_elevation_deg == 40.0


def test_bundled_configs_parse():
    desk = load_config("configs/desk.yaml")
    assert desk.users_sweep == (4, 8) and desk.capacity_sweep == (1, 2)
    assert desk.episodes == 50 and desk.n_slots == 120 and desk.repetitions == 3
    assert desk.reward.rate_norm_bps == 6.6e7  # guards float coercion from YAML
    assert desk.agent.batch_size == 64
    full = load_config("configs/full.yaml")
    assert full.users_sweep == (10, 15, 20, 25, 30)
    assert full.capacity_sweep == (1, 3, 5, 7, 9)
    assert full.episodes == 300 and full.agent.replay_capacity == 200_000
    assert full.agent.learning_rate == 1e-3 and full.agent.discount == 0.99
    assert (full.agent.epsilon0, full.agent.epsilon_min) == (0.2, 0.01)


def test_n_slots_rounding_and_floor():
    assert _small_config(episode_seconds=1199.0, slot_seconds=10.0).n_slots == 120
    assert _small_config(episode_seconds=1.0, slot_seconds=10.0).n_slots == 1


def test_config_validation():
    with pytest.raises(ConfigurationError):
        _small_config(users_sweep=())
    with pytest.raises(ConfigurationError):
        _small_config(capacity_sweep=(0,))
    with pytest.raises(ConfigurationError):
        _small_config(repetitions=0)
    with pytest.raises(ConfigurationError):
        _small_config(policies=("mvt", "sticky"))


def test_cell_streams_reproducible_and_rep_sensitive():
    cfg = _small_config()
    a = _cell_streams(cfg, 3, 1, 0)
    b = _cell_streams(cfg, 3, 1, 0)
    assert (a["env_seed"], a["policy_seed"], a["agent_seed"]) == \
           (b["env_seed"], b["policy_seed"], b["agent_seed"])
    c = _cell_streams(cfg, 3, 1, 1)
    assert a["env_seed"] != c["env_seed"]
    users_a = place_users(cfg, 3, a["placement"])
    users_b = place_users(cfg, 3, b["placement"])
    for ua, ub in zip(users_a, users_b):
        assert (ua.latitude_deg, ua.longitude_deg) == (ub.latitude_deg, ub.longitude_deg)


def test_place_users_box_and_wrap():
    cfg = _small_config()
    rng = np.random.default_rng(0)
    users = place_users(cfg, 40, rng)
    assert [u.user_id for u in users] == list(range(40))
    for u in users:
        assert abs(u.latitude_deg - 45.0) <= 3.0
        assert abs(u.longitude_deg - 10.0) <= 3.0
    import dataclasses
    wrapped = dataclasses.replace(cfg, placement=dataclasses.replace(
        cfg.placement, center_lon_deg=179.5, radius_deg=2.0))
    for u in place_users(wrapped, 40, np.random.default_rng(1)):
        assert -180.0 <= u.longitude_deg <= 180.0


def test_run_cell_rows_are_deterministic():
    cfg = _small_config()
    r1 = run_cell(cfg, "mvt", 3, 1, 0)
    r2 = run_cell(cfg, "mvt", 3, 1, 0)
    assert r1.csv_cells() == r2.csv_cells()
    assert float(r1.csv_cells()[4]) == r1.throughput_bps  # repr round-trips


def test_run_sweep_outputs(tmp_path):
    cfg = _small_config(repetitions=3, policies=("mvt",))
    rows, aggregates, failures = run_sweep(cfg, tmp_path)
    assert len(rows) == 3 and len(aggregates) == 1 and failures == []
    agg = aggregates[0]
    assert agg["reps"] == 3
    vals = np.array([r.throughput_bps for r in rows])
    assert agg["throughput_bps_mean"] == float(vals.mean())
    assert agg["throughput_bps_std"] == float(vals.std())
    expected_obj = (agg["throughput_bps_mean"] / cfg.reward.rate_norm_bps
                    - cfg.reward.lambda1 * agg["blocking_prob_mean"]
                    - cfg.reward.lambda2 * agg["handovers_per_user_mean"])
    assert np.isclose(agg["objective_mean"], expected_obj, atol=1e-15)

    raw = (tmp_path / "raw_results.csv").read_text().splitlines()
    assert raw[0] == ",".join(RAW_COLUMNS)
    assert len(raw) == 4
    assert "wall_time_s" not in raw[0]
    agg_lines = (tmp_path / "aggregate_results.csv").read_text().splitlines()
    assert agg_lines[0] == ",".join(AGGREGATE_COLUMNS)
    assert len(agg_lines) == 2
    timings = (tmp_path / "timings.csv").read_text().splitlines()
    assert timings[0] == "policy,users,capacity,seed,wall_time_s"
    assert len(timings) == 4
    assert not (tmp_path / "failures.csv").exists()


def test_sweep_raw_csv_bytes_identical(tmp_path):
    cfg = _small_config(repetitions=2, policies=("mac", "mshbo"))
    run_sweep(cfg, tmp_path / "a")
    run_sweep(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "raw_results.csv").read_bytes() == \
           (tmp_path / "b" / "raw_results.csv").read_bytes()
    assert (tmp_path / "a" / "aggregate_results.csv").read_bytes() == \
           (tmp_path / "b" / "aggregate_results.csv").read_bytes()


def test_missing_checkpoint_is_recorded_not_fatal(tmp_path):
    cfg = _small_config(repetitions=2, policies=("trained",))
    rows, aggregates, failures = run_sweep(cfg, tmp_path,
                                           checkpoint_dir=tmp_path / "ckpt")
    assert rows == [] and aggregates == []
    assert len(failures) == 2
    assert all("ConfigurationError" in f["error"] for f in failures)
    text = (tmp_path / "failures.csv").read_text()
    assert text.startswith("policy,users,capacity,seed,error")
    assert "missing checkpoint" in text
    with pytest.raises(ConfigurationError):
        run_cell(cfg, "trained", 3, 1, 0, checkpoint_dir=None)


def test_train_cell_writes_checkpoint_and_log(tmp_path):
    cfg = _small_config(
        episodes=2,
        agent=__import__("leohandover.agent", fromlist=["AgentConfig"]).AgentConfig(
            batch_size=16, replay_capacity=512, trunk_dims=(16,), stream_dims=(8,),
            warm_start_policy="none",
        ),
    )
    path, log = train_cell(cfg, 3, 1, tmp_path)
    assert path == checkpoint_path(tmp_path / "checkpoints", 3, 1)
    assert path.exists()
    net = load_checkpoint(path)
    assert net.k_max == cfg.k_max and net.obs_dim == observation_dim(cfg.k_max)
    assert len(log.episode) == 2
    log_text = (tmp_path / "training_log_3_1.csv").read_text().splitlines()
    assert log_text[0] == "episode,mean_reward,loss,epsilon,alpha,beta,gamma," \
                          "blocking_rate,handover_rate"
    assert len(log_text) == 3


def test_trained_policy_rolls_out_after_training(tmp_path):
    agent_cfg = __import__("leohandover.agent", fromlist=["AgentConfig"]).AgentConfig(
        batch_size=16, replay_capacity=512, trunk_dims=(16,), stream_dims=(8,),
        warm_start_policy="none",
    )
    cfg = _small_config(episodes=2, agent=agent_cfg, policies=("trained",))
    train_cell(cfg, 3, 1, tmp_path)
    row = run_cell(cfg, "trained", 3, 1, 0,
                   checkpoint_dir=tmp_path / "checkpoints")
    assert row.policy == "trained" and np.isfinite(row.episode_reward)


def test_aggregate_preserves_first_seen_order():
    cfg = _small_config()
    mk = lambda policy, users: ResultRow(policy, users, 1, 0, 1.0, 0.0, 0.0, 0.0, 0.0)
    rows = [mk("mac", 3), mk("mvt", 3), mk("mac", 3)]
    aggs = aggregate_rows(cfg, rows)
    assert [a["policy"] for a in aggs] == ["mac", "mvt"]
    assert aggs[0]["reps"] == 2 and aggs[1]["reps"] == 1


def test_oracle_validation_suite_small():
    summary = oracle_validation_suite(n_instances=6, seed=3)
    assert summary["instances"] >= 1
    assert summary["dominated"]
    assert summary["min_gap"] >= -1e-9


# -- command line -------------------------------------------------------------

def _write_tiny_yaml(path):
    path.write_text(
        "users_sweep: [3]\n"
        "capacity_sweep: [1]\n"
        "episodes: 1\n"
        "repetitions: 1\n"
        "episode_seconds: 60\n"
        "slot_seconds: 10\n"
        "policies: [mvt]\n"
        "constellation:\n"
        "  shells:\n"
        "    - {altitude_km: 1015.0, inclination_deg: 85.0, plane_count: 8, "
        "sats_per_plane: 8}\n"
        "  min_elevation_deg: 10\n"
    )


def test_cli_usage_errors():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["train"])  # --config is required
    assert e.value.code == 2


def test_cli_train_needs_both_cell_coordinates(tmp_path):
    cfg_path = tmp_path / "tiny.yaml"
    _write_tiny_yaml(cfg_path)
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path),
                 "--users", "3"]) == 2


def test_cli_missing_config_file(tmp_path):
    assert main(["evaluate", "--config", str(tmp_path / "nope.yaml")]) == 1


def test_cli_evaluate_runs_sweep(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.yaml"
    _write_tiny_yaml(cfg_path)
    out = tmp_path / "out"
    assert main(["evaluate", "--config", str(cfg_path), "--out", str(out),
                 "--policy", "mvt"]) == 0
    assert (out / "raw_results.csv").exists()
    assert "1 rows" in capsys.readouterr().out


def test_cli_checks_pass(capsys):
    assert main(["gradcheck", "--instances", "3", "--seed", "1"]) == 0
    assert "gradient error" in capsys.readouterr().out
    assert main(["oracle-check", "--instances", "4", "--seed", "2"]) == 0
    assert "dominance gap" in capsys.readouterr().out
