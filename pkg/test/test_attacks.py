import numpy as np
import pytest

from fogtrust import (
    AttackConfig,
    AuditError,
    Chain,
    OffloadRecord,
    Outcome,
    audit,
    mark_compromised,
    maybe_tamper,
    mine_block,
)
from fogtrust._topology import NodeSpec, Tier

from scenarios.builders import topology


def outcome(job_id=0, node_id="fog-0", met=True):
    return Outcome(
        job_id=job_id,
        action=1,
        node_id=node_id,
        release_time=0.0,
        absolute_deadline=2.0,
        completion_time=1.0,
        energy=0.5,
        deadline_met=met,
    )


def fog(compromised: bool) -> NodeSpec:
    return NodeSpec(id="fog-0", tier=Tier.FOG, capacity=1.0, compromised=compromised)


@pytest.mark.parametrize(
    "fraction, count", [(0.0, 0), (0.1, 0), (0.25, 1), (0.5, 2), (0.75, 3), (1.0, 4)]
)
def test_compromised_count(fraction, count):
    marked = mark_compromised(topology(fog=4), fraction, seed=3)

    assert len(marked) == count
    assert marked <= {"fog-0", "fog-1", "fog-2", "fog-3"}


@pytest.mark.parametrize("fog, fraction, count", [(2, 0.25, 1), (5, 0.5, 3), (5, 0.1, 1)])
def test_compromised_count_rounds_halves_up(fog, fraction, count):
    assert len(mark_compromised(topology(fog=fog), fraction, seed=0)) == count


def test_compromised_selection_is_reproducible():
    topo = topology(fog=6)
    assert mark_compromised(topo, 0.5, 11) == mark_compromised(topo, 0.5, 11)
    assert len({mark_compromised(topo, 0.5, s) for s in range(20)}) > 1


def test_compromised_selection_is_uniform():
    topo = topology(fog=4)
    hits = {n.id: 0 for n in topo.fog}
    for seed in range(400):
        for node_id in mark_compromised(topo, 0.25, seed):
            hits[node_id] += 1

    assert sum(hits.values()) == 400
    assert all(60 < h < 140 for h in hits.values())


def test_trusted_nodes_never_draw():
    rng = np.random.default_rng(0)
    before = rng.bit_generator.state

    result = maybe_tamper(outcome(), fog(False), AttackConfig(tamper_probability=1.0), rng)

    assert result == outcome()
    assert rng.bit_generator.state == before


def test_tamper_probability_bounds():
    rng = np.random.default_rng(0)
    always = AttackConfig(tamper_probability=1.0)
    never = AttackConfig(tamper_probability=0.0)

    node = fog(True)
    assert all(maybe_tamper(outcome(), node, always, rng).corrupted for _ in range(100))
    assert not any(maybe_tamper(outcome(), node, never, rng).corrupted for _ in range(100))


def test_corrupted_outcomes_miss():
    rng = np.random.default_rng(0)
    result = maybe_tamper(outcome(), fog(True), AttackConfig(tamper_probability=1.0), rng)

    assert result.corrupted
    assert not result.deadline_met
    assert result.digest != outcome().digest


def test_tamper_rate():
    rng = np.random.default_rng(5)
    config = AttackConfig(tamper_probability=0.25)
    corrupted = sum(
        maybe_tamper(outcome(), fog(True), config, rng).corrupted for _ in range(10_000)
    )
    # three binomial standard deviations
    assert abs(corrupted - 2500) <= 3 * np.sqrt(10_000 * 0.25 * 0.75)


def _ledgered(outcomes):
    chain = Chain(difficulty=0, max_tx_per_block=4)
    pending = [
        OffloadRecord(
            record_id=o.job_id,
            job_id=o.job_id,
            action=o.action,
            outcome_digest=o.digest,
            submit_time=0.0,
            record_deadline=10.0,
        )
        for o in outcomes
    ]
    while pending:
        mine_block(chain, pending, 0.0)
    return chain


def test_audit_detects_every_incident():
    honest = {
        i: outcome(job_id=i, node_id=f"fog-{i % 2}", met=i != 4) for i in range(8)
    }
    delivered = [o.corrupt() if i in (1, 3, 6) else o for i, o in honest.items()]

    report = audit(_ledgered(delivered), honest, delivered)

    assert report.incidents == 3
    assert report.detected == report.incidents
    assert report.per_node_incidents == {"fog-0": 1, "fog-1": 2}
    assert report.per_node_detected == report.per_node_incidents


def test_audit_of_clean_run():
    honest = {i: outcome(job_id=i) for i in range(3)}
    report = audit(_ledgered(honest.values()), honest, honest.values())

    assert report.incidents == report.detected == 0
    assert report.per_node_detected == {}


def test_audit_refuses_a_broken_chain():
    honest = {i: outcome(job_id=i) for i in range(8)}
    chain = _ledgered(honest.values())
    chain.blocks.reverse()

    with pytest.raises(AuditError):
        audit(chain, honest, honest.values())


@pytest.mark.parametrize(
    "field", ["compromised_fraction", "tamper_probability"]
)
def test_probabilities_are_bounded(field):
    with pytest.raises(ValueError):
        AttackConfig(**{field: 1.5})
