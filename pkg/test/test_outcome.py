import math
from dataclasses import replace

import pytest

from fogtrust import (
    Outcome,
    RewardWeights,
    UndefinedMetricError,
    compute_reward,
    schedulability_ratio,
)
from fogtrust._ledger import ZERO_HASH, OffloadRecord
from fogtrust._metrics import summarize


def outcome(**kwargs):
    fields = dict(
        job_id=3,
        action=1,
        node_id="fog-0",
        release_time=10.0,
        absolute_deadline=12.0,
        completion_time=10.0,
        energy=0.0,
        deadline_met=True,
    )
    return Outcome(**(fields | kwargs))


def test_encoding():
    data = outcome(energy=1.25).to_bytes()

    assert len(data) == 59
    assert data[:8] == (3).to_bytes(8, "little")
    assert data[-3:] == b"\x01\x00\x01"
    assert len(outcome().digest) == 32


def test_node_id_is_not_encoded():
    assert outcome(node_id="fog-0").digest == outcome(node_id="fog-1").digest


def test_corrupt():
    bad = outcome().corrupt()

    assert bad.corrupted
    assert not bad.deadline_met
    assert bad.digest != outcome().digest


def test_perfect_outcome_earns_the_completion_weight():
    assert compute_reward(outcome(), RewardWeights()) == 1.0


def test_worst_finished_outcome():
    bad = outcome(completion_time=12.0, energy=4.0, deadline_met=False, corrupted=True)
    assert compute_reward(bad, RewardWeights(), energy_ref=4.0) == pytest.approx(-3.7)


def test_latency_penalty_is_capped():
    late = outcome(completion_time=30.0, deadline_met=False)
    capped = outcome(completion_time=14.0, deadline_met=False)
    unfinished = replace(capped, completion_time=11.0, finished=False)

    expected = -0.5 * 2.0 - 1.0
    assert compute_reward(late, RewardWeights()) == pytest.approx(expected)
    assert compute_reward(capped, RewardWeights()) == pytest.approx(expected)
    assert compute_reward(unfinished, RewardWeights()) == pytest.approx(expected)


def test_zero_weights():
    zero = RewardWeights(done=0, latency=0, energy=0, security=0, miss=0)
    bad = outcome(completion_time=20.0, energy=9.0, deadline_met=False, corrupted=True)

    assert compute_reward(bad, zero) == 0.0
    assert compute_reward(outcome(), zero) == 0.0


def test_negative_weights_are_rejected():
    with pytest.raises(ValueError):
        RewardWeights(energy=-0.1)


@pytest.mark.parametrize(
    "completed, scheduled, expected", [(8, 10, 0.8), (10, 10, 1.0), (0, 3, 0.0)]
)
def test_schedulability_ratio(completed, scheduled, expected):
    assert schedulability_ratio(completed, scheduled) == expected


def test_schedulability_ratio_needs_scheduled_tasks():
    with pytest.raises(UndefinedMetricError):
        schedulability_ratio(0, 0)


def test_summarize():
    outcomes = [
        outcome(job_id=0, completion_time=11.0, energy=0.5),
        outcome(job_id=1, completion_time=13.0, energy=0.25, deadline_met=False),
        outcome(job_id=2, completion_time=10.5, energy=1.0).corrupt(),
        outcome(job_id=3, completion_time=11.5, energy=0.125),
    ]
    records = [
        OffloadRecord(0, 0, 1, ZERO_HASH, 11.0, 20.0, confirmed_time=14.0),
        OffloadRecord(1, 1, 1, ZERO_HASH, 13.0, 20.0, confirmed_time=14.0),
        OffloadRecord(2, 2, 1, ZERO_HASH, 10.5, 20.0),
    ]

    metrics = summarize(outcomes, [1.0, -1.0, -3.0, 1.0], records=records, detected=1)

    assert metrics.scheduled == 4
    assert metrics.completed == 2
    assert metrics.corrupted == 1
    assert metrics.misses == 1
    assert metrics.sched_ratio == 0.5
    assert metrics.mean_latency == pytest.approx(1.5)
    assert metrics.total_energy == 1.875
    assert metrics.incidents == 1
    assert metrics.detected == 1
    assert metrics.mean_confirm_latency == pytest.approx(2.0)
    assert metrics.mean_reward == -0.5


def test_summarize_empty_episode():
    metrics = summarize([], [])

    assert metrics.scheduled == 0
    assert math.isnan(metrics.sched_ratio)
    assert math.isnan(metrics.mean_latency)
    assert math.isnan(metrics.mean_confirm_latency)
    assert metrics.total_energy == 0.0
