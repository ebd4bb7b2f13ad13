import logging
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import numpy.typing as npt

from ._errors import ConfigError, ParameterError
from ._network import QNetwork, q_forward
from ._replay import MdpState
from ._topology import OffloadTarget

logger = logging.getLogger(__name__)


@dataclass
class DecisionContext:
    """
    What the engine offers a policy besides the state vector.

    :param estimates: estimated completion delay per target, in seconds
        (tx_time + current backlog + C_i)
    :param admissible: lazily evaluated admission verdict per target
    """

    targets: list[OffloadTarget]
    estimates: npt.NDArray[np.float64]
    rng: np.random.Generator
    admissible: Callable[[], npt.NDArray[np.bool_]] | None = None

    @property
    def action_count(self) -> int:
        return len(self.targets)


def decide_random(action_count: int, rng: np.random.Generator) -> int:
    if action_count < 1:
        raise ParameterError(f"action_count must be at least 1, got {action_count}")
    return int(rng.integers(action_count))


def decide_round_robin(counter: int, action_count: int) -> int:
    return counter % action_count


def decide_greedy(estimates: npt.ArrayLike) -> int:
    """Target with the smallest estimated completion delay; ties to the lowest index."""
    return int(np.argmin(estimates))


class Policy(ABC):
    name: ClassVar[str]

    @abstractmethod
    def decide(self, state: MdpState, context: DecisionContext) -> int:
        raise NotImplementedError()

    def reset(self) -> None:
        """Called by the engine before every episode."""


class RandomPolicy(Policy):
    name = "random"

    def decide(self, state, context):
        return decide_random(context.action_count, context.rng)


class RoundRobinPolicy(Policy):
    name = "round_robin"

    def __init__(self):
        self.counter = 0

    def reset(self):
        self.counter = 0

    def decide(self, state, context):
        action = decide_round_robin(self.counter, context.action_count)
        self.counter += 1
        return action


class GreedyPolicy(Policy):
    """Minimum estimated completion time; blind to security history."""

    name = "greedy"

    def decide(self, state, context):
        return decide_greedy(context.estimates)


class ThrottledPolicy(Policy):
    """Greedy over the targets whose node admits the job's stream."""

    name = "throttled"

    def decide(self, state, context):
        admissible = context.admissible() if context.admissible else None
        if admissible is None or not admissible.any():
            return decide_greedy(context.estimates)
        return decide_greedy(np.where(admissible, context.estimates, np.inf))


class LocalOnlyPolicy(Policy):
    name = "local_only"

    def decide(self, state, context):
        return 0


class CloudOnlyPolicy(Policy):
    name = "cloud_only"

    def decide(self, state, context):
        return context.action_count - 1


class DqnPolicy(Policy):
    """Greedy with respect to a trained Q-network."""

    name = "dqn"

    def __init__(self, network: QNetwork):
        self.network = network

    def decide(self, state, context):
        return int(np.argmax(q_forward(self.network, state)))


BASELINES: dict[str, type[Policy]] = {
    p.name: p
    for p in [
        RandomPolicy,
        RoundRobinPolicy,
        GreedyPolicy,
        ThrottledPolicy,
        LocalOnlyPolicy,
        CloudOnlyPolicy,
    ]
}

POLICY_NAMES = frozenset([*BASELINES, DqnPolicy.name])


def make_policy(name: str, network: QNetwork | None = None) -> Policy:
    if name == DqnPolicy.name:
        if network is None:
            raise ConfigError(f"policy {name!r} needs trained weights")
        return DqnPolicy(network)
    try:
        return BASELINES[name]()
    except KeyError:
        raise ConfigError(
            f"unknown policy {name!r}; expected one of {sorted(POLICY_NAMES)}"
        ) from None
