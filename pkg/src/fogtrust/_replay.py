from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from ._errors import ParameterError

type MdpState = npt.NDArray[np.float64]


@dataclass(frozen=True)
class Transition:
    state: MdpState
    action: int
    reward: float
    next_state: MdpState
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest is evicted first."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ParameterError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.insertions = 0
        self._ring: list[Transition | None] = [None] * capacity

    def __len__(self) -> int:
        return min(self.insertions, self.capacity)

    def __iter__(self) -> Iterator[Transition]:
        """Stored transitions, oldest first."""
        start = self.insertions % self.capacity if self.insertions > self.capacity else 0
        for k in range(len(self)):
            yield self._ring[(start + k) % self.capacity]

    def push(self, transition: Transition) -> None:
        self._ring[self.insertions % self.capacity] = transition
        self.insertions += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample, without replacement unless the buffer is smaller."""
        size = len(self)
        if size == 0:
            raise ParameterError("cannot sample from an empty replay buffer")
        indices = rng.choice(size, size=batch_size, replace=batch_size > size)
        return [self._ring[i] for i in indices]
