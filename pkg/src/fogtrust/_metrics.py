import logging
import math
from collections.abc import Sequence

import numpy as np

from ._errors import UndefinedMetricError
from ._ledger import OffloadRecord, confirmation_latency
from ._model import FrozenModel
from ._outcome import Outcome

logger = logging.getLogger(__name__)


class RunMetrics(FrozenModel):
    scheduled: int
    completed: int
    misses: int
    corrupted: int
    sched_ratio: float
    mean_latency: float
    p95_latency: float
    total_energy: float
    idle_energy: float = 0.0
    incidents: int = 0
    detected: int = 0
    mean_confirm_latency: float = math.nan
    mean_reward: float = math.nan


def schedulability_ratio(completed: int, scheduled: int) -> float:
    """
    Completed over scheduled tasks.

    :raises UndefinedMetricError: when nothing was scheduled
    """
    if scheduled < 1:
        raise UndefinedMetricError(
            "schedulability ratio is undefined without scheduled tasks"
        )
    return completed / scheduled


def summarize(
    outcomes: Sequence[Outcome],
    rewards: Sequence[float],
    *,
    records: Sequence[OffloadRecord] = (),
    detected: int = 0,
    idle_energy: float = 0.0,
) -> RunMetrics:
    """
    Aggregate the outcomes of one episode, given in decision order.

    total_energy is the left-to-right sum of per-job energies.
    """
    scheduled = len(outcomes)
    completed = sum(o.deadline_met for o in outcomes)
    corrupted = sum(o.corrupted for o in outcomes)

    try:
        ratio = schedulability_ratio(completed, scheduled)
    except UndefinedMetricError:
        logger.warning("episode released no jobs; schedulability ratio is NaN")
        ratio = math.nan

    latencies = np.array([o.latency for o in outcomes], dtype=np.float64)
    confirm = [confirmation_latency(r) for r in records if r.confirmed_time is not None]

    total_energy = 0.0
    for o in outcomes:
        total_energy += o.energy

    return RunMetrics(
        scheduled=scheduled,
        completed=completed,
        misses=scheduled - completed - corrupted,
        corrupted=corrupted,
        sched_ratio=ratio,
        mean_latency=float(latencies.mean()) if scheduled else math.nan,
        p95_latency=float(np.percentile(latencies, 95)) if scheduled else math.nan,
        total_energy=total_energy,
        idle_energy=idle_energy,
        incidents=corrupted,
        detected=detected,
        mean_confirm_latency=float(np.mean(confirm)) if confirm else math.nan,
        mean_reward=float(np.mean(rewards)) if len(rewards) else math.nan,
    )
