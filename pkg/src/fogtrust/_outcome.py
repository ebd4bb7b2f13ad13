# Canonical encoding, little-endian, 59 bytes: job_id, action u64 | release,
# absolute_deadline, completion, latency, energy f64 | deadline_met, corrupted,
# finished u8. The node id is implied by the action and is not encoded.

import struct
from dataclasses import dataclass, replace
from typing import Self

from pydantic import Field

from ._ledger import hash_bytes
from ._model import FrozenModel

_OUTCOME = struct.Struct("<QQdddddBBB")

LATENCY_CAP = 2.0


@dataclass(frozen=True)
class Outcome:
    job_id: int
    action: int
    node_id: str
    release_time: float
    absolute_deadline: float
    completion_time: float
    energy: float
    deadline_met: bool
    corrupted: bool = False
    finished: bool = True

    @property
    def latency(self) -> float:
        return self.completion_time - self.release_time

    @property
    def relative_deadline(self) -> float:
        return self.absolute_deadline - self.release_time

    def to_bytes(self) -> bytes:
        return _OUTCOME.pack(
            self.job_id,
            self.action,
            self.release_time,
            self.absolute_deadline,
            self.completion_time,
            self.latency,
            self.energy,
            self.deadline_met,
            self.corrupted,
            self.finished,
        )

    @property
    def digest(self) -> bytes:
        return hash_bytes(self.to_bytes())

    def corrupt(self) -> Self:
        return replace(self, corrupted=True, deadline_met=False)


class RewardWeights(FrozenModel):
    done: float = Field(default=1.0, ge=0)
    latency: float = Field(default=0.5, ge=0)
    energy: float = Field(default=0.2, ge=0)
    security: float = Field(default=2.0, ge=0)
    miss: float = Field(default=1.0, ge=0)


def compute_reward(
    outcome: Outcome, weights: RewardWeights, energy_ref: float = 1.0
) -> float:
    """
    Weighted reward of one finalized outcome.

    r = w_done*[met] - w_lat*min(latency/D, 2) - w_en*energy/E_ref
        - w_sec*[corrupted] - w_miss*[not met]

    Jobs unfinished at the horizon take the latency cap.
    """
    if outcome.finished:
        lateness = min(outcome.latency / outcome.relative_deadline, LATENCY_CAP)
    else:
        lateness = LATENCY_CAP

    return (
        weights.done * outcome.deadline_met
        - weights.latency * lateness
        - weights.energy * (outcome.energy / energy_ref)
        - weights.security * outcome.corrupted
        - weights.miss * (not outcome.deadline_met)
    )
