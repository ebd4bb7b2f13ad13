import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol, Self

from pydantic import Field, model_validator

from ._attacks import AttackConfig
from ._engine import run_episode, state_length
from ._errors import ParameterError
from ._ledger import LedgerConfig
from ._model import FrozenModel
from ._network import (
    QNetwork,
    q_forward,
    select_action,
    sgd_step,
    sync_target,
    td_loss_and_grads,
)
from ._outcome import RewardWeights
from ._policies import DecisionContext, Policy
from ._replay import MdpState, ReplayBuffer, Transition
from ._topology import Topology
from ._workload import TaskStream, generate_jobs
from .utils import derive_seed, make_rng

logger = logging.getLogger(__name__)


class TrainingConfig(FrozenModel):
    gamma: float = Field(default=0.9, ge=0, lt=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=32, gt=0)
    replay_capacity: int = Field(default=10_000, gt=0)
    target_sync: int = Field(default=200, gt=0)
    epsilon_start: float = Field(default=1.0, ge=0, le=1)
    epsilon_end: float = Field(default=0.05, ge=0, le=1)
    # None decays over the first half of the expected decisions
    epsilon_decay_steps: int | None = Field(default=None, ge=0)
    episodes: int = Field(default=300, ge=0)
    hidden_layers: list[int] = Field(default_factory=lambda: [64, 64])
    seed: int = Field(default=0, ge=0)
    double_dqn: bool = False
    horizon: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _epsilon_decreases(self) -> Self:
        if self.epsilon_end > self.epsilon_start:
            raise ValueError(
                f"epsilon_end {self.epsilon_end} exceeds epsilon_start {self.epsilon_start}"
            )
        if any(width <= 0 for width in self.hidden_layers):
            raise ValueError(
                f"hidden layer widths must be positive, got {self.hidden_layers}"
            )
        return self


def linear_epsilon(step: int, start: float, end: float, decay_steps: int) -> float:
    """Linear decay from start to end over decay_steps decisions, then constant."""
    if decay_steps <= 0:
        return end
    return start + (end - start) * min(step / decay_steps, 1.0)


class DqnLearner:
    """
    Online network, target network and replay buffer of one training run.

    The learner is fed transitions with observe() and takes one gradient step
    per learn_step() call once the buffer holds a full batch.
    """

    def __init__(
        self, layer_sizes: Sequence[int], config: TrainingConfig, decay_steps: int
    ):
        self.config = config
        self.decay_steps = decay_steps
        self.network = QNetwork.initialize(layer_sizes, make_rng(config.seed, "init"))
        self.target = sync_target(self.network)
        self.replay = ReplayBuffer(config.replay_capacity)
        self.rng = make_rng(config.seed, "explore")
        self.decisions = 0
        self.gradient_steps = 0
        self.last_loss = math.nan

    @property
    def epsilon(self) -> float:
        return linear_epsilon(
            self.decisions,
            self.config.epsilon_start,
            self.config.epsilon_end,
            self.decay_steps,
        )

    def act(self, state: MdpState) -> int:
        q_values = q_forward(self.network, state)
        action = select_action(q_values, self.epsilon, self.rng)
        self.decisions += 1
        return action

    def observe(self, transition: Transition) -> None:
        self.replay.push(transition)

    def learn_step(self) -> float | None:
        if len(self.replay) < self.config.batch_size:
            return None

        batch = self.replay.sample(self.config.batch_size, self.rng)
        loss, grads = td_loss_and_grads(
            self.network, self.target, batch, self.config.gamma, self.config.double_dqn
        )
        self.network = sgd_step(self.network, grads, self.config.learning_rate)
        self.gradient_steps += 1

        if not math.isfinite(loss) or not self.network.all_finite():
            raise FloatingPointError(
                f"training diverged at gradient step {self.gradient_steps} (loss {loss})"
            )

        if self.gradient_steps % self.config.target_sync == 0:
            self.target = sync_target(self.network)
            logger.debug(
                f"synced target network at step {self.gradient_steps}, loss {loss:.6g}"
            )

        self.last_loss = loss
        return loss


class Environment(Protocol):
    def reset(self) -> MdpState: ...

    def step(self, action: int) -> tuple[MdpState, float, bool]: ...


def train_environment(
    env: Environment,
    config: TrainingConfig,
    layer_sizes: Sequence[int],
    *,
    steps: int,
) -> DqnLearner:
    """
    Train on a step-wise environment for a fixed number of decisions.

    Each decision stores its transition and then takes one learning step. The
    environment is reset whenever it reports done.
    """
    decay = config.epsilon_decay_steps
    learner = DqnLearner(layer_sizes, config, steps // 2 if decay is None else decay)

    state = env.reset()
    for _ in range(steps):
        action = learner.act(state)
        next_state, reward, done = env.step(action)
        learner.observe(Transition(state, action, reward, next_state, done))
        learner.learn_step()
        state = env.reset() if done else next_state

    logger.info(
        f"trained {learner.gradient_steps} gradient steps over {steps} decisions"
    )
    return learner


class LearningPolicy(Policy):
    """Epsilon-greedy on the learner's network; learns once per decision."""

    name = "dqn"

    def __init__(self, learner: DqnLearner):
        self.learner = learner

    def decide(self, state: MdpState, context: DecisionContext) -> int:
        action = self.learner.act(state)
        self.learner.learn_step()
        return action


@dataclass(frozen=True)
class CurvePoint:
    episode: int
    mean_reward: float
    sched_ratio: float


def _expected_decisions(streams: list[TaskStream], horizon: float, episodes: int) -> int:
    per_episode = sum(len(generate_jobs(s, horizon)) for s in streams)
    return episodes * per_episode


def train(
    topology: Topology,
    streams: list[TaskStream],
    config: TrainingConfig,
    ledger_config: LedgerConfig | None = None,
    attack_config: AttackConfig | None = None,
    *,
    weights: RewardWeights | None = None,
    horizon: float | None = None,
) -> tuple[QNetwork, list[CurvePoint]]:
    """
    Train a Q-network on simulator episodes.

    Episode k runs with seed derive_seed(config.seed, "train", k); the
    transitions the engine emits go straight into the replay buffer.

    :param horizon: episode length; config.horizon takes precedence when set
    :return: the trained network and one curve point per episode
    """
    horizon = config.horizon or horizon
    if horizon is None:
        raise ParameterError("training needs a horizon")

    layer_sizes = [
        state_length(len(topology.fog)),
        *config.hidden_layers,
        topology.action_count,
    ]
    decay = config.epsilon_decay_steps
    if decay is None:
        decay = _expected_decisions(streams, horizon, config.episodes) // 2

    learner = DqnLearner(layer_sizes, config, decay)
    policy = LearningPolicy(learner)
    curve = []

    for episode in range(config.episodes):
        trace = run_episode(
            topology,
            streams,
            policy,
            ledger_config,
            attack_config,
            horizon,
            derive_seed(config.seed, "train", episode),
            weights=weights,
            transition_sink=learner.observe,
        )
        point = CurvePoint(episode, trace.metrics.mean_reward, trace.metrics.sched_ratio)
        curve.append(point)
        logger.info(
            f"episode {episode}: reward {point.mean_reward:.4f}, "
            f"sched ratio {point.sched_ratio:.3f}, epsilon {learner.epsilon:.3f}"
        )

    if not learner.network.all_finite():
        raise FloatingPointError("trained network holds non-finite weights")

    return learner.network, curve
