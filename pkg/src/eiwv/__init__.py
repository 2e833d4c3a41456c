"""Simulation and training harness for sequential crowdsourcing incentive design.

A platform posts per-worker payment rates each step; a crowd of greedy,
possibly colluding workers decides whether to label; labels are aggregated
without ground truth (Dawid-Skene EM or majority vote), optionally checked by a
costly oracle; an actor-critic agent with state-change prioritised replay learns
the payment rule.
"""

from .agent import A2CAgent, DQNUniformAgent, FixedPolicy, RandomPolicy, ReplayBuffer, TrainLog, make_agent, train
from .config import ExperimentConfig, load_config
from .dataset import GoldLabels, ResponseTable, load_gold, load_responses, standin_dataset, synth_generate
from .env import CrowdsourcingEnv, EnvConfig
from .inference import DawidSkene, MajorityVote, ds_em, majority_vote

__version__ = "0.1.0"

__all__ = [
    "A2CAgent",
    "DQNUniformAgent",
    "FixedPolicy",
    "RandomPolicy",
    "ReplayBuffer",
    "TrainLog",
    "make_agent",
    "train",
    "ExperimentConfig",
    "load_config",
    "GoldLabels",
    "ResponseTable",
    "load_gold",
    "load_responses",
    "standin_dataset",
    "synth_generate",
    "CrowdsourcingEnv",
    "EnvConfig",
    "DawidSkene",
    "MajorityVote",
    "ds_em",
    "majority_vote",
]
