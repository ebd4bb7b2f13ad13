import logging
import math
from dataclasses import dataclass
from enum import IntEnum, StrEnum
from typing import TYPE_CHECKING

import numpy as np
from pydantic import Field

from ._errors import ParameterError, StatusError
from ._model import FrozenModel

if TYPE_CHECKING:
    from ._topology import LinkSpec, NodeSpec

logger = logging.getLogger(__name__)


class ArrivalKind(StrEnum):
    PERIODIC = "periodic"
    POISSON = "poisson"


class TaskStream(FrozenModel):
    """
    A source of recurring tasks on one IoT device.

    :param period: mean inter-arrival time T_i in seconds
    :param deadline: relative deadline D_i in seconds
    :param size: work-units S_i per job
    :param source: id of the IoT device releasing the jobs
    """

    id: str
    period: float = Field(gt=0)
    deadline: float = Field(gt=0)
    size: float = Field(gt=0)
    source: str
    arrival: ArrivalKind = ArrivalKind.PERIODIC


class JobStatus(IntEnum):
    # ordered so that a legal transition never decreases the value
    PENDING = 0
    OFFLOADED = 1
    COMPLETED = 2
    MISSED = 3
    CORRUPTED = 4

    @property
    def terminal(self) -> bool:
        return self >= JobStatus.COMPLETED


@dataclass
class TaskInstance:
    job_id: int
    stream_id: str
    release_time: float
    absolute_deadline: float
    size: float
    status: JobStatus = JobStatus.PENDING

    @property
    def relative_deadline(self) -> float:
        return self.absolute_deadline - self.release_time

    def advance(self, status: JobStatus) -> None:
        """Move to a later status; terminal statuses are final."""
        if self.status.terminal or status <= self.status:
            raise StatusError(
                f"job {self.job_id}: illegal transition {self.status.name} -> {status.name}"
            )
        if status.terminal and self.status is JobStatus.PENDING:
            raise StatusError(f"job {self.job_id} finished without being offloaded")
        self.status = status


@dataclass(frozen=True)
class SlotParams:
    exec_time: float
    tx_time: float

    @property
    def total_budget(self) -> float:
        return self.tx_time + self.exec_time


def generate_jobs(
    stream: TaskStream, horizon: float, rng_seed: int = 0
) -> list[TaskInstance]:
    """
    Release the jobs of a stream on [0, horizon].

    Periodic streams release synchronously at 0, T, 2T, ...; Poisson streams
    draw exponential inter-arrival times with mean T from a generator seeded
    with rng_seed. Job ids are local to the stream, counting from 0.

    :raises ParameterError: if horizon is not positive
    """
    if not horizon > 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")

    match stream.arrival:
        case ArrivalKind.PERIODIC:
            releases = _periodic_releases(stream.period, horizon)
        case ArrivalKind.POISSON:
            releases = _poisson_releases(stream.period, horizon, rng_seed)

    logger.debug(f"stream {stream.id}: {len(releases)} jobs on [0, {horizon}]")
    return [
        TaskInstance(
            job_id=k,
            stream_id=stream.id,
            release_time=t,
            absolute_deadline=t + stream.deadline,
            size=stream.size,
        )
        for k, t in enumerate(releases)
    ]


def _periodic_releases(period: float, horizon: float) -> list[float]:
    n = math.floor(horizon / period)
    # the quotient can round either way across an exact multiple
    while n > 0 and n * period > horizon:
        n -= 1
    while (n + 1) * period <= horizon:
        n += 1
    return [k * period for k in range(n + 1)]


def _poisson_releases(mean: float, horizon: float, seed: int) -> list[float]:
    rng = np.random.default_rng(seed)
    releases = []
    t = float(rng.exponential(mean))
    while t <= horizon:
        releases.append(t)
        t += float(rng.exponential(mean))
    return releases


def slot_parameters(
    stream: TaskStream, node: "NodeSpec", link: "LinkSpec | None" = None
) -> SlotParams:
    """
    Translate a stream's work size into execution and transmission times.

    C_i = S_i / capacity; tx = S_i / bandwidth + propagation. Without a link the
    job runs where it was released and tx is 0.

    :raises ParameterError: on non-positive capacity or bandwidth
    """
    if not node.capacity > 0:
        raise ParameterError(f"node {node.id} has non-positive capacity {node.capacity}")

    tx_time = 0.0
    if link is not None:
        if not link.bandwidth > 0:
            raise ParameterError(
                f"link {link.source}->{link.target} "
                f"has non-positive bandwidth {link.bandwidth}"
            )
        tx_time = stream.size / link.bandwidth + link.propagation

    return SlotParams(exec_time=stream.size / node.capacity, tx_time=tx_time)
