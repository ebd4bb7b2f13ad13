import logging
import struct
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Self

import numpy as np
import numpy.typing as npt

from ._errors import ParameterError, ShapeError
from ._model import FrozenModel
from ._replay import MdpState, Transition

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"FTQN"
CHECKPOINT_VERSION = 1

type Array = npt.NDArray[np.float64]


@dataclass
class QNetwork:
    weights: list[Array]
    biases: list[Array]

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> Self:
        """Uniform weights and biases in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
        if len(layer_sizes) < 2:
            raise ShapeError(f"need input and output sizes, got {list(layer_sizes)}")

        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0], *(w.shape[1] for w in self.weights)]

    @property
    def parameters(self) -> list[Array]:
        return [*self.weights, *self.biases]

    def copy(self) -> Self:
        return type(self)(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def zeros_like(self) -> Self:
        return type(self)(
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters)


def _check_input(net: QNetwork, states: Array) -> None:
    if states.shape[-1] != net.layer_sizes[0]:
        raise ShapeError(
            f"state length {states.shape[-1]} "
            f"does not match input layer {net.layer_sizes[0]}"
        )


def _forward(net: QNetwork, states: Array) -> tuple[list[Array], list[Array]]:
    """Layer inputs and pre-activations for a batch of states."""
    inputs, pre = [], []
    h = states
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
    inputs.append(h)
    return inputs, pre


def q_forward(net: QNetwork, state: MdpState) -> Array:
    """Q-values for one state (1-d) or a batch of states (2-d)."""
    states = np.asarray(state, dtype=np.float64)
    _check_input(net, states)
    inputs, _ = _forward(net, states)
    return inputs[-1]


def bellman_target(
    reward: float,
    gamma: float,
    next_q_target: Array,
    done: bool,
    next_q_online: Array | None = None,
) -> float:
    """
    r if done, else r + gamma * max(next_q_target).

    With next_q_online (double DQN) the bootstrap action is chosen by the
    online values and evaluated by the target values.
    """
    if done:
        return float(reward)
    if next_q_online is None:
        bootstrap = np.max(next_q_target)
    else:
        bootstrap = next_q_target[int(np.argmax(next_q_online))]
    return float(reward + gamma * bootstrap)


def _stack(batch: Sequence[Transition]):
    states = np.stack([t.state for t in batch]).astype(np.float64)
    actions = np.array([t.action for t in batch], dtype=np.intp)
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    next_states = np.stack([t.next_state for t in batch]).astype(np.float64)
    dones = np.array([t.done for t in batch], dtype=bool)
    return states, actions, rewards, next_states, dones


def td_loss_and_grads(
    net: QNetwork,
    target_net: QNetwork,
    batch: Sequence[Transition],
    gamma: float,
    double_dqn: bool = False,
) -> tuple[float, QNetwork]:
    """
    Mean squared TD error and its gradient with respect to `net` only.

    Targets come from `target_net` and are held constant.
    """
    if not batch:
        raise ParameterError("batch must not be empty")

    states, actions, rewards, next_states, dones = _stack(batch)
    _check_input(net, states)
    rows = np.arange(len(batch))

    next_target = q_forward(target_net, next_states)
    if double_dqn:
        chosen = np.argmax(q_forward(net, next_states), axis=1)
        bootstrap = next_target[rows, chosen]
    else:
        bootstrap = np.max(next_target, axis=1)
    targets = rewards + gamma * np.where(dones, 0.0, bootstrap)

    inputs, pre = _forward(net, states)
    errors = targets - inputs[-1][rows, actions]
    loss = float(np.mean(errors**2))

    # only the taken action's output receives gradient
    delta = np.zeros_like(inputs[-1])
    delta[rows, actions] = -2.0 * errors / len(batch)

    grads = net.zeros_like()
    for k in reversed(range(len(net.weights))):
        grads.weights[k] = inputs[k].T @ delta
        grads.biases[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k].T) * (pre[k - 1] > 0)

    return loss, grads


def sgd_step(net: QNetwork, grads: QNetwork, learning_rate: float) -> QNetwork:
    if net.layer_sizes != grads.layer_sizes:
        raise ShapeError(f"gradient shape {grads.layer_sizes} != network {net.layer_sizes}")

    return QNetwork(
        [w - learning_rate * g for w, g in zip(net.weights, grads.weights)],
        [b - learning_rate * g for b, g in zip(net.biases, grads.biases)],
    )


def select_action(q_values: Array, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties go to the lowest index."""
    if not 0 <= epsilon <= 1:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")

    if rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


def sync_target(net: QNetwork) -> QNetwork:
    return net.copy()


class CheckpointHeader(FrozenModel):
    version: int = CHECKPOINT_VERSION
    layer_sizes: list[int]
    seed: int
    config_digest: str


def save_checkpoint(
    path: Path | str, net: QNetwork, *, seed: int, config_digest: str
) -> None:
    """
    Write weights as: magic, u32 header length, JSON header, then for each
    layer W (row-major) and b as little-endian float64.
    """
    header = CheckpointHeader(
        layer_sizes=net.layer_sizes, seed=seed, config_digest=config_digest
    ).model_dump_json().encode("utf-8")

    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(header)), header]
    for w, b in zip(net.weights, net.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())

    Path(path).write_bytes(b"".join(chunks))
    logger.info(f"saved checkpoint {path} with layers {net.layer_sizes}")


def load_checkpoint(path: Path | str) -> tuple[QNetwork, CheckpointHeader]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ShapeError(f"{path} is not a checkpoint file")

    (length,) = struct.unpack_from("<I", data, 4)
    header = CheckpointHeader.model_validate_json(data[8 : 8 + length])
    if header.version != CHECKPOINT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {header.version}")

    offset = 8 + length
    weights, biases = [], []
    sizes = header.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += w.nbytes
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += b.nbytes
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))

    if offset != len(data):
        raise ShapeError(f"{path}: {len(data) - offset} trailing bytes")

    logger.debug(f"loaded checkpoint {path}: {header}")
    return QNetwork(weights, biases), header
