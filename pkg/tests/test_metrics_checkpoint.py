import math

import numpy as np
import pytest

from pgra.agent import TrainConfig, train
from pgra.checkpoint import load_checkpoint, restore, save_checkpoint
from pgra.envs.maze import Maze, MazeConfig
from pgra.metrics import COLUMNS, MetricsLog, SchemaError, aggregate_runs, smooth


def _log(returns, meta=None):
    log = MetricsLog(meta)
    for i, r in enumerate(returns):
        log.append(i, r, 3, 0.5, (0.1, 0.01, 0.001), wall_ms=1.0)
    return log


def test_write_read_round_trip(tmp_path):
    log = _log([1.0, -0.05, 1 / 3], {"seed": 4})
    log.rows[0]["supervised_loss"] = math.nan
    log.write(tmp_path)
    back = MetricsLog.read(tmp_path)
    assert back.metadata["seed"] == 4 and back.metadata["columns"] == list(COLUMNS)
    np.testing.assert_array_equal(back.returns(), log.returns())
    assert back.payload() == log.payload()


def test_rows_must_be_ordered():
    log = _log([0.0])
    with pytest.raises(ValueError, match="ordered"):
        log.append(0, 0.0, 1, 0.0, (0, 0, 0))


def test_schema_version_checked(tmp_path):
    _log([0.0]).write(tmp_path)
    (tmp_path / "meta.json").write_text('{"schema_version": 99}')
    with pytest.raises(SchemaError, match="99"):
        MetricsLog.read(tmp_path)


def test_smooth():
    np.testing.assert_allclose(smooth([1, 2, 3, 4], 2), [1, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(smooth([1, 2], 1), [1, 2])


def test_aggregate(tmp_path):
    _log([1.0, 3.0]).write(tmp_path / "a")
    _log([3.0, 5.0]).write(tmp_path / "b")
    mean, std = aggregate_runs([tmp_path / "a", tmp_path / "b"], tmp_path / "agg.csv")
    np.testing.assert_allclose(mean, [2.0, 4.0])
    np.testing.assert_allclose(std, [1.0, 1.0])
    lines = (tmp_path / "agg.csv").read_text().splitlines()
    assert lines[0] == "episode,mean_return,std_return,n_runs" and len(lines) == 3


def test_aggregate_single_run_zero_std(tmp_path):
    _log([1.0, 2.0]).write(tmp_path / "a")
    _, std = aggregate_runs([tmp_path / "a"], tmp_path / "agg.csv")
    np.testing.assert_array_equal(std, 0.0)


def test_aggregate_mismatched_lengths(tmp_path):
    _log([1.0, 2.0]).write(tmp_path / "a")
    _log([1.0]).write(tmp_path / "b")
    with pytest.raises(ValueError, match="mismatched episode counts.*1 episodes"):
        aggregate_runs([tmp_path / "a", tmp_path / "b"], tmp_path / "agg.csv")


@pytest.mark.parametrize("algorithm", ["ac-ra", "ac-flat"])
def test_checkpoint_round_trip(tmp_path, algorithm):
    env = Maze(MazeConfig(n_actuators=3, actuator_magnitude=0.1))
    res = train(TrainConfig(env, algorithm=algorithm, total_episodes=2, n_init_trajectories=5,
                            init_max_epochs=2, seed=3))
    save_checkpoint(res.learner, tmp_path / "c.npz", {"note": "x"})
    ck = load_checkpoint(tmp_path / "c.npz")
    assert ck.t == res.learner.t and ck.meta["note"] == "x"
    fresh = train(TrainConfig(env, algorithm=algorithm, total_episodes=1, n_init_trajectories=0,
                              seed=8)).learner
    restore(fresh, ck)
    if algorithm == "ac-ra":
        np.testing.assert_array_equal(fresh.rep.W, res.learner.rep.W)
        np.testing.assert_array_equal(fresh.policy.M, res.learner.policy.M)
        assert ck.representations().n_actions == 8
    else:
        np.testing.assert_array_equal(fresh.policy.theta, res.learner.policy.theta)
        assert ck.representations() is None
    np.testing.assert_array_equal(ck.critic().omega, res.learner.critic.omega)


def test_checkpoint_rejects_foreign_file(tmp_path):
    np.savez(tmp_path / "x.npz", a=np.zeros(2))
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(tmp_path / "x.npz")
