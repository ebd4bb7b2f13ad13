import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fogtrust import ConfigError, QNetwork, action_space, make_policy, slot_parameters
from fogtrust._policies import (
    BASELINES,
    POLICY_NAMES,
    DecisionContext,
    DqnPolicy,
    decide_greedy,
    decide_random,
    decide_round_robin,
)
from fogtrust._topology import OffloadTarget, TargetKind

from scenarios.builders import stream, topology

TARGETS = [
    OffloadTarget(TargetKind.LOCAL, "iot-0"),
    OffloadTarget(TargetKind.FOG, "fog-0"),
    OffloadTarget(TargetKind.FOG, "fog-1"),
    OffloadTarget(TargetKind.CLOUD, "cloud"),
]


def context(estimates, admissible=None, seed=0):
    return DecisionContext(
        targets=TARGETS,
        estimates=np.asarray(estimates, dtype=np.float64),
        rng=np.random.default_rng(seed),
        admissible=(lambda: np.asarray(admissible)) if admissible is not None else None,
    )


STATE = np.zeros(10)


def test_greedy_picks_the_fastest_target():
    assert decide_greedy([5.0, 2.1, 2.0, 3.0]) == 2
    assert decide_greedy([5.0, 2.0, 2.0, 3.0]) == 1


@given(
    st.lists(st.integers(-1000, 1000), min_size=1, max_size=8),
    st.integers(-(10**6), 10**6),
)
def test_greedy_ignores_a_common_offset(estimates, offset):
    shifted = [e + offset for e in estimates]
    assert decide_greedy(shifted) == decide_greedy(estimates)


def completion_estimates(backlogs):
    # iot-0, fog-0, fog-1 and the cloud of the default builder topology
    topo = topology()
    s = stream(size=5.0)
    estimates = []
    for target, backlog in zip(action_space(topo, "iot-0"), backlogs, strict=True):
        node = topo.node(target.node_id)
        link = None if target.kind is TargetKind.LOCAL else topo.link("iot-0", node.id)
        estimates.append(slot_parameters(s, node, link).total_budget + backlog)
    return estimates


def test_greedy_prefers_the_nearest_idle_fog():
    estimates = completion_estimates([0.0, 0.0, 0.0, 0.0])

    assert estimates == pytest.approx([5.0, 0.62, 0.62, 0.775])
    assert decide_greedy(estimates) == 1


def test_greedy_falls_back_to_the_cloud_when_fog_is_saturated():
    estimates = completion_estimates([0.0, 2.0, 1.5, 0.0])
    assert decide_greedy(estimates) == 3


def test_greedy_with_a_single_target():
    assert decide_greedy([7.0]) == 0


def test_round_robin_cycles():
    assert [decide_round_robin(k, 4) for k in range(6)] == [0, 1, 2, 3, 0, 1]

    policy = make_policy("round_robin")
    ctx = context([0.0] * 4)
    assert [policy.decide(STATE, ctx) for _ in range(5)] == [0, 1, 2, 3, 0]
    policy.reset()
    assert policy.decide(STATE, ctx) == 0


def test_random_is_uniform():
    rng = np.random.default_rng(1)
    counts = np.bincount([decide_random(5, rng) for _ in range(50_000)], minlength=5)

    # three binomial standard deviations around 0.2
    assert np.all(np.abs(counts - 10_000) <= 3 * np.sqrt(50_000 * 0.2 * 0.8))


def test_random_needs_actions():
    with pytest.raises(ValueError):
        decide_random(0, np.random.default_rng())


def test_fixed_targets():
    ctx = context([1.0, 2.0, 3.0, 4.0])
    assert make_policy("local_only").decide(STATE, ctx) == 0
    assert make_policy("cloud_only").decide(STATE, ctx) == 3


def test_throttled_skips_inadmissible_targets():
    policy = make_policy("throttled")

    estimates = [5.0, 1.0, 2.0, 3.0]
    assert policy.decide(STATE, context(estimates, [True, False, True, True])) == 2
    assert policy.decide(STATE, context(estimates, [True] * 4)) == 1
    # nothing admits: fall back to plain greedy
    assert policy.decide(STATE, context(estimates, [False] * 4)) == 1
    assert policy.decide(STATE, context([5.0, 1.0, 2.0, 3.0])) == 1


def test_dqn_policy_is_greedy_in_q():
    rng = np.random.default_rng(0)
    net = QNetwork.initialize([10, 4], rng)
    net.biases[-1][:] = [0.0, 0.0, 5.0, 0.0]
    net.weights[-1][:] = 0.0

    assert make_policy("dqn", net).decide(STATE, context([0.0] * 4)) == 2


def test_dqn_needs_weights():
    with pytest.raises(ConfigError, match="trained weights"):
        make_policy("dqn")


def test_unknown_policy():
    with pytest.raises(ConfigError, match="unknown policy 'oracle'"):
        make_policy("oracle")


def test_registry():
    assert POLICY_NAMES == {*BASELINES, DqnPolicy.name}
    assert all(make_policy(name).name == name for name in BASELINES)
