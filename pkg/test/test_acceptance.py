import numpy as np
import pytest

from fogtrust import run_experiment

from scenarios.builders import acceptance_config

pytestmark = pytest.mark.slow


def _mean(rows, policy, column):
    return np.mean([r.value(column) for r in rows if r.policy == policy])


def test_trained_agent_beats_the_baselines(tmp_path):
    rows = run_experiment(acceptance_config(), out_dir=tmp_path)

    assert _mean(rows, "dqn", "sched_ratio") >= _mean(rows, "random", "sched_ratio") + 0.05
    assert _mean(rows, "dqn", "incidents") <= 0.5 * _mean(rows, "random", "incidents")
    assert _mean(rows, "dqn", "mean_reward") > _mean(rows, "greedy", "mean_reward")


def test_acceptance_tables_are_byte_identical(tmp_path):
    config = acceptance_config(training={"episodes": 20})
    run_experiment(config, out_dir=tmp_path / "first")
    run_experiment(config, out_dir=tmp_path / "second")

    first = (tmp_path / "first" / "results.csv").read_bytes()
    assert first == (tmp_path / "second" / "results.csv").read_bytes()
