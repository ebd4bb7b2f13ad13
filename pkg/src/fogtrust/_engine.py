import functools
import heapq
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from ._attacks import (
    AttackConfig,
    SecurityReport,
    TamperMiddleware,
    audit,
    mark_compromised,
)
from ._errors import ParameterError
from ._ledger import Chain, LedgerConfig, Miner, OffloadRecord
from ._metrics import RunMetrics, summarize
from ._outcome import Outcome, RewardWeights, compute_reward
from ._policies import DecisionContext, Policy
from ._replay import MdpState, Transition
from ._schedulability import StreamDemand, admit, default_delta_max
from ._topology import NodeSpec, OffloadTarget, TargetKind, Topology, action_space
from ._workload import (
    JobStatus,
    SlotParams,
    TaskInstance,
    TaskStream,
    generate_jobs,
    slot_parameters,
)
from .utils import derive_seed, make_rng

logger = logging.getLogger(__name__)

FEATURE_LAYOUT_VERSION = 1


class EventKind(StrEnum):
    JOB_RELEASE = "job_release"
    TX_COMPLETE = "tx_complete"
    EXEC_COMPLETE = "exec_complete"
    BLOCK_MINED = "block_mined"
    EPISODE_END = "episode_end"


@dataclass(order=True, frozen=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    job_id: int | None = field(default=None, compare=False)


@dataclass
class EpisodeTrace:
    transitions: list[Transition]
    outcomes: list[Outcome]
    honest: dict[int, Outcome]
    metrics: RunMetrics
    security: SecurityReport
    chain: Chain | None = None


def state_length(fog_count: int) -> int:
    return 2 * (fog_count + 2) + 2


@dataclass
class _Dispatch:
    job: TaskInstance
    stream: TaskStream
    action: int
    node_id: str
    params: SlotParams
    energy: float
    start_time: float | None = None


@dataclass
class _NodeState:
    spec: NodeSpec
    # heap of (absolute_deadline, job_id, exec_time)
    queue: list[tuple[float, int, float]] = field(default_factory=list)
    inbound: dict[int, float] = field(default_factory=dict)
    running: int | None = None
    running_until: float = 0.0
    busy_time: float = 0.0

    def backlog(self, now: float) -> float:
        """Seconds of service owed: running remainder, queued and in-transit work."""
        remaining = self.running_until - now if self.running is not None else 0.0
        return remaining + sum(e for _, _, e in self.queue) + sum(self.inbound.values())


class Engine:
    """
    One episode of the offloading simulation.

    The engine is single-threaded and used once: construct it, call run().

    :param transition_sink: receives each transition once its reward and next
        state are both known (completion order, not decision order)
    """

    def __init__(
        self,
        topology: Topology,
        streams: list[TaskStream],
        policy: Policy,
        *,
        horizon: float,
        seed: int,
        ledger_config: LedgerConfig | None = None,
        attack_config: AttackConfig | None = None,
        weights: RewardWeights | None = None,
        transition_sink: Callable[[Transition], None] | None = None,
    ):
        if not horizon > 0:
            raise ParameterError(f"horizon must be positive, got {horizon}")

        self.attack_config = attack_config or AttackConfig()
        compromised = mark_compromised(
            topology, self.attack_config.compromised_fraction, self.attack_config.seed
        )
        self.topology = topology.with_compromised(compromised) if compromised else topology
        self.streams = {s.id: s for s in streams}
        self.policy = policy
        self.horizon = horizon
        self.seed = seed
        self.weights = weights or RewardWeights()
        self.transition_sink = transition_sink

        self.ledger_config = ledger_config or LedgerConfig()
        self.miner = (
            Miner(Chain.from_config(self.ledger_config))
            if self.ledger_config.enabled
            else None
        )

        self.middleware: list[object] = []
        if compromised:
            self.middleware.append(
                TamperMiddleware(
                    self.topology, self.attack_config, make_rng(seed, "tamper")
                )
            )

        self.policy_rng = make_rng(seed, "policy")
        self.energy_ref = self._energy_reference(streams)
        self.max_size = max((s.size for s in streams), default=1.0)
        self.delta_max = default_delta_max(
            [StreamDemand(1.0, s.period, s.deadline) for s in streams]
        )

        self.now = 0.0
        self._seq = 0
        self._events: list[Event] = []
        self._nodes = {n.id: _NodeState(n) for n in self.topology.nodes}
        self._targets: dict[str, list[OffloadTarget]] = {}
        self._jobs: dict[int, _Dispatch] = {}
        self._routed: dict[str, dict[str, StreamDemand]] = {
            n.id: {} for n in self.topology.nodes
        }

        self._ended = False
        self._decisions: list[int] = []
        self._decision_index: dict[int, int] = {}
        self._states: list[MdpState] = []
        self._next_states: list[MdpState | None] = []
        self._rewards: dict[int, float] = {}
        self._transitions: dict[int, Transition] = {}
        self._outcomes: dict[int, Outcome] = {}
        self.honest: dict[int, Outcome] = {}

        self._record_id = 0
        self._confirmations: list[OffloadRecord] = []
        self._confirm_cursor = 0
        self._confirmed: dict[str, int] = {}
        self._detected: dict[str, int] = {}

    def _energy_reference(self, streams: list[TaskStream]) -> float:
        cloud = self.topology.cloud
        if not streams:
            return 1.0
        if cloud.busy_power == 0:
            logger.warning(
                f"cloud {cloud.id} has zero busy power; using energy reference 1.0"
            )
            return 1.0
        mean_exec = sum(s.size / cloud.capacity for s in streams) / len(streams)
        return cloud.busy_power * mean_exec


    def _schedule(self, time: float, kind: EventKind, job_id: int | None = None) -> None:
        if time < self.now:
            raise ParameterError(f"cannot schedule {kind} at {time} before now={self.now}")
        heapq.heappush(self._events, Event(time, self._seq, kind, job_id))
        self._seq += 1

    def targets(self, device_id: str) -> list[OffloadTarget]:
        if device_id not in self._targets:
            self._targets[device_id] = action_space(self.topology, device_id)
        return self._targets[device_id]

    def _release_jobs(self) -> list[TaskInstance]:
        jobs = []
        for index, stream in enumerate(self.streams.values()):
            seed = derive_seed(self.seed, "workload", index)
            jobs.extend((index, job) for job in generate_jobs(stream, self.horizon, seed))

        jobs.sort(key=lambda pair: (pair[1].release_time, pair[0], pair[1].job_id))
        released = []
        for job_id, (_, job) in enumerate(jobs):
            job.job_id = job_id
            released.append(job)
        return released

    def run(self) -> EpisodeTrace:
        self.policy.reset()
        pending = {}
        for job in self._release_jobs():
            pending[job.job_id] = job
            self._schedule(job.release_time, EventKind.JOB_RELEASE, job.job_id)
        self._schedule(self.horizon, EventKind.EPISODE_END)

        while self._events:
            event = heapq.heappop(self._events)
            self.now = event.time
            logger.debug(f"t={event.time:.6f} #{event.seq} {event.kind} job={event.job_id}")

            match event.kind:
                case EventKind.JOB_RELEASE:
                    self._decide(pending.pop(event.job_id))
                case EventKind.TX_COMPLETE:
                    self._arrive(event.job_id)
                case EventKind.EXEC_COMPLETE:
                    self._complete(event.job_id)
                case EventKind.BLOCK_MINED:
                    self.miner.finish()
                    self._start_block()
                case EventKind.EPISODE_END:
                    self._end_episode()
                    break

        return self._trace()


    def observe_state(self, job: TaskInstance) -> MdpState:
        """
        Feature vector of length 2*(N_fog + 2) + 2, every entry in [0, 1].

        Layout: backlog per target in action order, corruption rate per remote
        target (fog nodes then cloud), normalized size, normalized slack, and
        the elapsed fraction of the episode.
        """
        stream = self.streams[job.stream_id]
        targets = self.targets(stream.source)
        deadline = job.relative_deadline

        self._absorb_confirmations()
        backlogs = np.array([self._nodes[t.node_id].backlog(self.now) for t in targets])
        corruption = [self._corruption_rate(t.node_id) for t in targets[1:]]
        slack = (deadline - backlogs.min()) / deadline

        return np.concatenate(
            [
                np.minimum(backlogs / deadline, 1.0),
                corruption,
                [
                    stream.size / self.max_size,
                    min(max(slack, 0.0), 1.0),
                    min(self.now / self.horizon, 1.0),
                ],
            ]
        )

    def _corruption_rate(self, node_id: str) -> float:
        confirmed = self._confirmed.get(node_id, 0)
        return self._detected.get(node_id, 0) / confirmed if confirmed else 0.0

    def _absorb_confirmations(self) -> None:
        """Count ledger records confirmed by now against the honest digests."""
        while self._confirm_cursor < len(self._confirmations):
            record = self._confirmations[self._confirm_cursor]
            if record.confirmed_time > self.now:
                break
            node_id = self.honest[record.job_id].node_id
            self._confirmed[node_id] = self._confirmed.get(node_id, 0) + 1
            if record.outcome_digest != self.honest[record.job_id].digest:
                self._detected[node_id] = self._detected.get(node_id, 0) + 1
            self._confirm_cursor += 1

    def _context(self, job: TaskInstance) -> DecisionContext:
        stream = self.streams[job.stream_id]
        targets = self.targets(stream.source)
        estimates = np.array(
            [
                self._slot(stream, t).total_budget
                + self._nodes[t.node_id].backlog(self.now)
                for t in targets
            ]
        )
        return DecisionContext(
            targets=targets,
            estimates=estimates,
            rng=self.policy_rng,
            admissible=functools.partial(self._admissible, stream, targets),
        )

    def _admissible(self, stream: TaskStream, targets: list[OffloadTarget]) -> np.ndarray:
        verdicts = []
        for target in targets:
            routed = self._routed[target.node_id]
            others = [d for sid, d in routed.items() if sid != stream.id]
            candidate = StreamDemand(
                self._slot(stream, target).exec_time, stream.period, stream.deadline
            )
            verdicts.append(admit(others, candidate, self.delta_max))
        return np.array(verdicts, dtype=bool)

    def _slot(self, stream: TaskStream, target: OffloadTarget) -> SlotParams:
        node = self.topology.node(target.node_id)
        if target.kind is TargetKind.LOCAL:
            return slot_parameters(stream, node)
        return slot_parameters(stream, node, self.topology.link(stream.source, node.id))

    def _decide(self, job: TaskInstance) -> None:
        state = self.observe_state(job)
        if self._decisions:
            self._next_states[-1] = state
            self._emit_ready(len(self._decisions) - 1)

        context = self._context(job)
        action = self.policy.decide(state, context)
        if not 0 <= action < context.action_count:
            raise ParameterError(
                f"policy {type(self.policy).__name__} chose {action} "
                f"outside [0, {context.action_count})"
            )

        self._decision_index[job.job_id] = len(self._decisions)
        self._decisions.append(job.job_id)
        self._states.append(state)
        self._next_states.append(None)
        self.execute_offload(job, action)


    def execute_offload(self, job: TaskInstance, action: int) -> None:
        """Dispatch a job: transmit if remote, then queue at the target node."""
        stream = self.streams[job.stream_id]
        target = self.targets(stream.source)[action]
        node = self.topology.node(target.node_id)
        params = self._slot(stream, target)

        tx_energy = 0.0
        if target.kind is not TargetKind.LOCAL:
            tx_energy = self.topology.link(stream.source, node.id).tx_power * params.tx_time

        job.advance(JobStatus.OFFLOADED)
        self._jobs[job.job_id] = _Dispatch(job, stream, action, node.id, params, tx_energy)
        self._routed[node.id][stream.id] = StreamDemand(
            params.exec_time, stream.period, stream.deadline
        )

        if target.kind is TargetKind.LOCAL:
            self._enqueue(job.job_id)
        else:
            self._nodes[node.id].inbound[job.job_id] = params.exec_time
            self._schedule(self.now + params.tx_time, EventKind.TX_COMPLETE, job.job_id)

    def _arrive(self, job_id: int) -> None:
        dispatch = self._jobs[job_id]
        del self._nodes[dispatch.node_id].inbound[job_id]
        self._enqueue(job_id)

    def _enqueue(self, job_id: int) -> None:
        dispatch = self._jobs[job_id]
        node = self._nodes[dispatch.node_id]
        heapq.heappush(
            node.queue, (dispatch.job.absolute_deadline, job_id, dispatch.params.exec_time)
        )
        if node.running is None:
            self._serve_next(node)

    def _serve_next(self, node: _NodeState) -> None:
        if not node.queue:
            return
        _, job_id, exec_time = heapq.heappop(node.queue)
        node.running = job_id
        node.running_until = self.now + exec_time
        self._jobs[job_id].start_time = self.now
        self._schedule(node.running_until, EventKind.EXEC_COMPLETE, job_id)

    def _complete(self, job_id: int) -> None:
        dispatch = self._jobs[job_id]
        node = self._nodes[dispatch.node_id]
        node.running = None
        node.busy_time += dispatch.params.exec_time
        dispatch.energy += node.spec.busy_power * dispatch.params.exec_time

        job = dispatch.job
        honest = Outcome(
            job_id=job_id,
            action=dispatch.action,
            node_id=dispatch.node_id,
            release_time=job.release_time,
            absolute_deadline=job.absolute_deadline,
            completion_time=self.now,
            energy=dispatch.energy,
            deadline_met=self.now <= job.absolute_deadline,
        )
        delivered = self._apply_outcome_middleware(honest)

        if delivered.corrupted:
            job.advance(JobStatus.CORRUPTED)
        elif delivered.deadline_met:
            job.advance(JobStatus.COMPLETED)
        else:
            job.advance(JobStatus.MISSED)

        self._finalize(honest, delivered)
        self._serve_next(node)

    def _apply_outcome_middleware(self, outcome: Outcome) -> Outcome:
        """Apply all middleware with a process_outcome method, in order."""
        outcome_altering_middleware = filter(
            lambda m: hasattr(m, "process_outcome") and callable(m.process_outcome),
            self.middleware,
        )
        return functools.reduce(
            lambda acc, m: m.process_outcome(acc), outcome_altering_middleware, outcome
        )

    def _finalize(self, honest: Outcome, delivered: Outcome) -> None:
        self.honest[honest.job_id] = honest
        self._outcomes[honest.job_id] = delivered
        self._rewards[honest.job_id] = compute_reward(
            delivered, self.weights, self.energy_ref
        )
        self._record(delivered)
        self._emit_ready(self._decision_index[honest.job_id])


    def _record(self, outcome: Outcome) -> None:
        if self.miner is None:
            return
        self.miner.submit(
            OffloadRecord(
                record_id=self._record_id,
                job_id=outcome.job_id,
                action=outcome.action,
                outcome_digest=outcome.digest,
                submit_time=self.now,
                record_deadline=outcome.absolute_deadline,
            )
        )
        self._record_id += 1
        self._start_block()

    def _start_block(self) -> None:
        blocks = len(self.miner.chain.blocks)
        freed = self.miner.try_start(self.now)
        if freed is None:
            return
        self._confirmations.extend(self.miner.chain.blocks[blocks].transactions)
        self._schedule(freed, EventKind.BLOCK_MINED)


    def _end_episode(self) -> None:
        """Unfinished jobs are Missed; remaining ledger records are flushed."""
        self._ended = True
        for job_id in self._decisions:
            dispatch = self._jobs[job_id]
            if dispatch.job.status.terminal:
                continue

            node = self._nodes[dispatch.node_id]
            if node.running == job_id:
                ran = self.now - dispatch.start_time
                node.busy_time += ran
                dispatch.energy += node.spec.busy_power * ran

            dispatch.job.advance(JobStatus.MISSED)
            outcome = Outcome(
                job_id=job_id,
                action=dispatch.action,
                node_id=dispatch.node_id,
                release_time=dispatch.job.release_time,
                absolute_deadline=dispatch.job.absolute_deadline,
                completion_time=self.now,
                energy=dispatch.energy,
                deadline_met=False,
                finished=False,
            )
            self._finalize(outcome, outcome)

        if self._decisions:
            self._next_states[-1] = np.zeros_like(self._states[-1])
            self._emit_ready(len(self._decisions) - 1)

        if self.miner is not None:
            blocks = len(self.miner.chain.blocks)
            self.miner.flush(self.now)
            for block in self.miner.chain.blocks[blocks:]:
                self._confirmations.extend(block.transactions)

    def _emit_ready(self, index: int) -> None:
        """Build the transition of decision `index` once reward and next state are known."""
        job_id = self._decisions[index]
        if index in self._transitions or job_id not in self._rewards:
            return
        next_state = self._next_states[index]
        if next_state is None:
            return

        transition = Transition(
            state=self._states[index],
            action=self._jobs[job_id].action,
            reward=self._rewards[job_id],
            next_state=next_state,
            done=self._ended and index == len(self._decisions) - 1,
        )
        self._transitions[index] = transition
        if self.transition_sink is not None:
            self.transition_sink(transition)

    def _trace(self) -> EpisodeTrace:
        outcomes = [self._outcomes[j] for j in self._decisions]
        rewards = [self._rewards[j] for j in self._decisions]
        transitions = [self._transitions[i] for i in range(len(self._decisions))]

        chain = self.miner.chain if self.miner is not None else None
        if chain is not None:
            security = audit(chain, self.honest, outcomes)
        else:
            security = SecurityReport(incidents=sum(o.corrupted for o in outcomes))

        idle_energy = 0.0
        for state in self._nodes.values():
            idle_energy += state.spec.idle_power * max(self.horizon - state.busy_time, 0.0)

        metrics = summarize(
            outcomes,
            rewards,
            records=chain.records if chain is not None else (),
            detected=security.detected,
            idle_energy=idle_energy,
        )
        logger.debug(
            f"episode seed={self.seed}: {metrics.completed}/{metrics.scheduled} completed"
        )
        return EpisodeTrace(
            transitions=transitions,
            outcomes=outcomes,
            honest=dict(self.honest),
            metrics=metrics,
            security=security,
            chain=chain,
        )


def run_episode(
    topology: Topology,
    streams: list[TaskStream],
    policy: Policy,
    ledger_config: LedgerConfig | None,
    attack_config: AttackConfig | None,
    horizon: float,
    seed: int,
    weights: RewardWeights | None = None,
    transition_sink: Callable[[Transition], None] | None = None,
) -> EpisodeTrace:
    engine = Engine(
        topology,
        streams,
        policy,
        horizon=horizon,
        seed=seed,
        ledger_config=ledger_config,
        attack_config=attack_config,
        weights=weights,
        transition_sink=transition_sink,
    )
    return engine.run()
