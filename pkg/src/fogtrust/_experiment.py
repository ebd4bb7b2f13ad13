import csv
import logging
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import Field

from ._agent import CurvePoint, TrainingConfig, train
from ._attacks import AttackConfig
from ._engine import FEATURE_LAYOUT_VERSION, EpisodeTrace, run_episode, state_length
from ._errors import ComparisonError, ConfigError
from ._ledger import LedgerConfig, write_chain
from ._metrics import RunMetrics
from ._model import FrozenModel
from ._network import QNetwork, load_checkpoint
from ._outcome import RewardWeights
from ._policies import POLICY_NAMES, DqnPolicy, make_policy
from ._topology import Tier, Topology, TopologyConfig, build_topology
from ._workload import TaskStream
from .utils import digest_hex

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "policy",
    "seed",
    "scheduled",
    "completed",
    "misses",
    "sched_ratio",
    "mean_latency",
    "p95_latency",
    "total_energy",
    "incidents",
    "detected",
    "mean_confirm_latency",
    "mean_reward",
    "config_digest",
)

METRIC_COLUMNS = CSV_COLUMNS[2:-1]


class ExperimentConfig(FrozenModel):
    topology: TopologyConfig
    streams: list[TaskStream]
    policies: list[str]
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    ledger: LedgerConfig = Field(default_factory=LedgerConfig)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    reward: RewardWeights = Field(default_factory=RewardWeights)
    seeds: list[int] = Field(min_length=1)
    horizon: float = Field(gt=0)
    feature_layout: int = FEATURE_LAYOUT_VERSION
    checkpoint: Path | None = None
    workers: int = Field(default=1, ge=1)

    @property
    def digest(self) -> str:
        return digest_hex(self)


def check_references(config: ExperimentConfig) -> Topology:
    """
    Resolve every id the experiment refers to and build its topology.

    :raises ConfigError: listing every violation with its field path
    """
    violations = []
    topology = None
    try:
        topology = build_topology(config.topology)
    except ConfigError as e:
        violations.extend(f"topology: {v}" for v in e.violations)

    devices = {n.id for n in config.topology.nodes if n.tier is Tier.IOT}
    seen_streams = set()
    for i, stream in enumerate(config.streams):
        if stream.source not in devices:
            violations.append(
                f"streams[{i}].source: {stream.source!r} is not an iot device"
            )
        if stream.id in seen_streams:
            violations.append(f"streams[{i}].id: duplicate stream id {stream.id!r}")
        seen_streams.add(stream.id)
    if not config.streams:
        violations.append("streams: at least one stream is required")

    for i, name in enumerate(config.policies):
        if name not in POLICY_NAMES:
            violations.append(
                f"policies[{i}]: unknown policy {name!r}; "
                f"expected one of {sorted(POLICY_NAMES)}"
            )
    if not config.policies:
        violations.append("policies: at least one policy is required")

    if len(set(config.seeds)) != len(config.seeds):
        violations.append(f"seeds: duplicate seeds in {config.seeds}")

    if config.feature_layout != FEATURE_LAYOUT_VERSION:
        violations.append(
            f"feature_layout: unsupported version {config.feature_layout}, "
            f"expected {FEATURE_LAYOUT_VERSION}"
        )

    if violations:
        raise ConfigError(violations)
    return topology


@dataclass(frozen=True)
class ResultRow:
    policy: str
    seed: int
    metrics: RunMetrics
    config_digest: str
    wall_clock: float = math.nan

    def value(self, column: str) -> str | int | float:
        match column:
            case "policy":
                return self.policy
            case "seed":
                return self.seed
            case "config_digest":
                return self.config_digest
            case _:
                return getattr(self.metrics, column)

    def csv_fields(self) -> list[str]:
        # repr keeps floats round-trippable
        return [
            repr(v) if isinstance(v, float) else str(v)
            for v in map(self.value, CSV_COLUMNS)
        ]


class SidecarRow(FrozenModel):
    policy: str
    seed: int
    wall_clock: float
    corrupted: int
    idle_energy: float
    per_node_incidents: dict[str, int]
    per_node_detected: dict[str, int]


class Sidecar(FrozenModel):
    config: ExperimentConfig
    config_digest: str
    rows: list[SidecarRow] = Field(default_factory=list)
    training_curve: list[CurvePoint] = Field(default_factory=list)


class ResultWriter:
    """Appends rows to a CSV file as they are produced, flushing each one."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._file = path.open("w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._file, lineterminator="\n")
        self._csv.writerow(CSV_COLUMNS)
        self._file.flush()

    def append(self, row: ResultRow) -> None:
        self._csv.writerow(row.csv_fields())
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_network(config: ExperimentConfig, topology: Topology) -> QNetwork:
    network, header = load_checkpoint(config.checkpoint)
    sizes = header.layer_sizes
    expected_in, expected_out = state_length(len(topology.fog)), topology.action_count
    if sizes[0] != expected_in or sizes[-1] != expected_out:
        raise ConfigError(
            f"checkpoint: layers {sizes} do not fit {expected_in} features "
            f"and {expected_out} actions"
        )
    return network


def run_cell(
    config: ExperimentConfig,
    topology: Topology,
    policy_name: str,
    seed: int,
    network: QNetwork | None = None,
) -> tuple[ResultRow, EpisodeTrace]:
    """Evaluate one policy on one seed; rows reproduce solo."""
    policy = make_policy(policy_name, network)
    started = time.perf_counter()
    trace = run_episode(
        topology,
        config.streams,
        policy,
        config.ledger,
        config.attack,
        config.horizon,
        seed,
        weights=config.reward,
    )
    elapsed = time.perf_counter() - started
    logger.info(
        f"{policy_name} seed={seed}: sched ratio {trace.metrics.sched_ratio:.3f}, "
        f"incidents {trace.metrics.incidents} ({elapsed:.2f}s)"
    )
    return ResultRow(policy_name, seed, trace.metrics, config.digest, elapsed), trace


def run_experiment(
    config: ExperimentConfig,
    *,
    out_dir: Path | str | None = None,
    network: QNetwork | None = None,
    export_chains: bool = False,
) -> list[ResultRow]:
    """
    Train (if a dqn policy needs it) and evaluate every (policy, seed) cell.

    With out_dir, rows are appended to out_dir/results.csv as they finish and
    out_dir/results.json holds the config echo, wall clock times and the
    training curve.

    :param network: trained weights for the dqn policy, overriding training
        and config.checkpoint
    :raises ConfigError: before anything runs, if the config does not resolve
    """
    topology = check_references(config)
    digest = config.digest
    logger.info(f"experiment {digest[:12]}: {config.policies} x seeds {config.seeds}")

    curve: list[CurvePoint] = []
    if DqnPolicy.name in config.policies and network is None:
        if config.checkpoint is not None:
            network = load_network(config, topology)
        else:
            network, curve = train(
                topology,
                config.streams,
                config.training,
                config.ledger,
                config.attack,
                weights=config.reward,
                horizon=config.horizon,
            )

    cells = sorted(
        (policy, seed) for policy in set(config.policies) for seed in config.seeds
    )
    out = Path(out_dir) if out_dir is not None else None
    sidecar_rows: list[SidecarRow] = []

    def evaluate(cell):
        return run_cell(config, topology, *cell, network=network)

    rows = []
    writer_context = ResultWriter(out / "results.csv") if out is not None else nullcontext()
    with writer_context as writer, ThreadPoolExecutor(max_workers=config.workers) as pool:
        # map yields in submission order, so rows keep the (policy, seed) order
        for row, trace in pool.map(evaluate, cells):
            rows.append(row)
            if writer is not None:
                writer.append(row)
            sidecar_rows.append(
                SidecarRow(
                    policy=row.policy,
                    seed=row.seed,
                    wall_clock=row.wall_clock,
                    corrupted=trace.metrics.corrupted,
                    idle_energy=trace.metrics.idle_energy,
                    per_node_incidents=trace.security.per_node_incidents,
                    per_node_detected=trace.security.per_node_detected,
                )
            )
            if export_chains and out is not None and trace.chain is not None:
                write_chain(trace.chain, out / "chains" / f"{row.policy}-{row.seed}.ndjson")

    if out is not None:
        sidecar = Sidecar(
            config=config, config_digest=digest, rows=sidecar_rows, training_curve=curve
        )
        (out / "results.json").write_text(
            sidecar.model_dump_json(indent=2), encoding="utf-8"
        )
        logger.info(f"wrote {len(rows)} rows to {out / 'results.csv'}")

    return rows


@dataclass(frozen=True)
class MetricDelta:
    """Candidate minus baseline for one metric, per seed and aggregated."""

    per_seed: dict[int, float]
    mean: float
    std: float


def _delta(base: float, cand: float) -> float:
    # a metric undefined on both sides did not change
    if math.isnan(base) and math.isnan(cand):
        return 0.0
    return cand - base


def compare(
    rows: Sequence[ResultRow], baseline: str, candidate: str
) -> dict[str, MetricDelta]:
    """
    Per-metric deltas of candidate against baseline across their common seeds.

    The standard deviation is the population one (ddof=0), so a single seed
    gives 0. A metric that is NaN for both rows of a seed has delta 0.

    :raises ComparisonError: if a policy is missing or the seed sets differ
    """
    by_policy: dict[str, dict[int, ResultRow]] = {}
    for row in rows:
        by_policy.setdefault(row.policy, {})[row.seed] = row

    for name in (baseline, candidate):
        if name not in by_policy:
            raise ComparisonError(f"policy {name!r} has no rows")

    base, cand = by_policy[baseline], by_policy[candidate]
    if base.keys() != cand.keys():
        raise ComparisonError(
            f"seed sets differ: {baseline} has {sorted(base)}, "
            f"{candidate} has {sorted(cand)}"
        )

    seeds = sorted(base)
    deltas = {}
    for column in METRIC_COLUMNS:
        per_seed = {
            s: _delta(float(base[s].value(column)), float(cand[s].value(column)))
            for s in seeds
        }
        values = np.array(list(per_seed.values()))
        deltas[column] = MetricDelta(per_seed, float(values.mean()), float(values.std()))
    return deltas
