from . import utils as utils
from ._agent import CurvePoint as CurvePoint
from ._agent import DqnLearner as DqnLearner
from ._agent import TrainingConfig as TrainingConfig
from ._agent import train as train
from ._agent import train_environment as train_environment
from ._attacks import AttackConfig as AttackConfig
from ._attacks import SecurityReport as SecurityReport
from ._attacks import TamperMiddleware as TamperMiddleware
from ._attacks import audit as audit
from ._attacks import mark_compromised as mark_compromised
from ._attacks import maybe_tamper as maybe_tamper
from ._engine import Engine as Engine
from ._engine import EpisodeTrace as EpisodeTrace
from ._engine import run_episode as run_episode
from ._engine import state_length as state_length
from ._errors import AuditError as AuditError
from ._errors import ComparisonError as ComparisonError
from ._errors import ConfigError as ConfigError
from ._errors import ParameterError as ParameterError
from ._errors import QueryError as QueryError
from ._errors import ShapeError as ShapeError
from ._errors import StatusError as StatusError
from ._errors import UndefinedMetricError as UndefinedMetricError
from ._errors import UnknownNodeError as UnknownNodeError
from ._experiment import ExperimentConfig as ExperimentConfig
from ._experiment import ResultRow as ResultRow
from ._experiment import compare as compare
from ._experiment import run_experiment as run_experiment
from ._ledger import Chain as Chain
from ._ledger import LedgerConfig as LedgerConfig
from ._ledger import OffloadRecord as OffloadRecord
from ._ledger import confirmation_latency as confirmation_latency
from ._ledger import mine_block as mine_block
from ._ledger import read_chain as read_chain
from ._ledger import verify_chain as verify_chain
from ._ledger import write_chain as write_chain
from ._metrics import RunMetrics as RunMetrics
from ._metrics import schedulability_ratio as schedulability_ratio
from ._network import QNetwork as QNetwork
from ._network import bellman_target as bellman_target
from ._network import load_checkpoint as load_checkpoint
from ._network import q_forward as q_forward
from ._network import save_checkpoint as save_checkpoint
from ._network import select_action as select_action
from ._network import sgd_step as sgd_step
from ._network import sync_target as sync_target
from ._network import td_loss_and_grads as td_loss_and_grads
from ._outcome import Outcome as Outcome
from ._outcome import RewardWeights as RewardWeights
from ._outcome import compute_reward as compute_reward
from ._policies import Policy as Policy
from ._policies import make_policy as make_policy
from ._replay import ReplayBuffer as ReplayBuffer
from ._replay import Transition as Transition
from ._schedulability import StreamDemand as StreamDemand
from ._schedulability import admit as admit
from ._schedulability import dbf as dbf
from ._schedulability import load as load
from ._schedulability import max_load as max_load
from ._topology import TopologyConfig as TopologyConfig
from ._topology import action_space as action_space
from ._topology import build_topology as build_topology
from ._workload import TaskStream as TaskStream
from ._workload import generate_jobs as generate_jobs
from ._workload import slot_parameters as slot_parameters
