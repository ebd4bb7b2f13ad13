import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np
from pydantic import Field

from ._errors import AuditError
from ._ledger import Chain, verify_chain
from ._model import FrozenModel
from ._outcome import Outcome
from ._topology import NodeSpec, Topology

logger = logging.getLogger(__name__)


class AttackConfig(FrozenModel):
    """
    Compromised fog nodes corrupt results of jobs they execute.

    Only fog nodes can be compromised; IoT devices and the cloud are trusted.
    """

    compromised_fraction: float = Field(default=0.0, ge=0, le=1)
    tamper_probability: float = Field(default=0.0, ge=0, le=1)
    seed: int = Field(default=0, ge=0)


@dataclass
class SecurityReport:
    incidents: int = 0
    detected: int = 0
    per_node_incidents: dict[str, int] = field(default_factory=dict)
    per_node_detected: dict[str, int] = field(default_factory=dict)


def mark_compromised(topology: Topology, fraction: float, seed: int) -> frozenset[str]:
    """
    Choose round(fraction * N_fog) distinct fog nodes uniformly at random.

    Halves round up, so 0.5 of 5 fog nodes marks 3.
    """
    fog_ids = [n.id for n in topology.fog]
    count = math.floor(fraction * len(fog_ids) + 0.5)
    if count == 0:
        return frozenset()

    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(fog_ids), size=count, replace=False)
    marked = frozenset(fog_ids[i] for i in chosen)
    logger.info(f"compromised fog nodes: {sorted(marked)}")
    return marked


def maybe_tamper(
    outcome: Outcome, node: NodeSpec, config: AttackConfig, rng: np.random.Generator
) -> Outcome:
    """Corrupt an outcome with the configured probability if its node is compromised."""
    if not node.compromised:
        return outcome

    if rng.random() < config.tamper_probability:
        logger.debug(f"node {node.id} corrupted job {outcome.job_id}")
        return outcome.corrupt()
    return outcome


class TamperMiddleware:
    """Outcome middleware applying maybe_tamper on the executing node."""

    def __init__(self, topology: Topology, config: AttackConfig, rng: np.random.Generator):
        self.topology = topology
        self.config = config
        self.rng = rng

    def process_outcome(self, outcome: Outcome) -> Outcome:
        node = self.topology.node(outcome.node_id)
        return maybe_tamper(outcome, node, self.config, self.rng)


def audit(
    chain: Chain, honest: Mapping[int, Outcome], outcomes: Iterable[Outcome]
) -> SecurityReport:
    """
    Recompute every recorded outcome digest from the honest results.

    :param chain: the run's ledger; it must verify
    :param honest: untampered outcome per job id, as executed by the engine
    :param outcomes: the outcomes actually delivered, giving the ground-truth incidents
    :raises AuditError: if the chain fails verification
    """
    verdict = verify_chain(chain)
    if not verdict.ok:
        raise AuditError(
            f"refusing to audit: block {verdict.bad_index} failed with {verdict.reason}"
        )

    incidents = Counter(o.node_id for o in outcomes if o.corrupted)
    detected = Counter(
        honest[record.job_id].node_id
        for record in chain.records
        if record.outcome_digest != honest[record.job_id].digest
    )

    return SecurityReport(
        incidents=incidents.total(),
        detected=detected.total(),
        per_node_incidents=dict(sorted(incidents.items())),
        per_node_detected=dict(sorted(detected.items())),
    )
