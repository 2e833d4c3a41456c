"""Experiment configuration as flat ``section.key = value`` text.

Example::

    # Bluebirds-shaped stand-in, oracle-aided agent
    dataset.name = bluebirds
    env.alpha = 0.2
    agent.mode = a2c_is_oracle
    run.seeds = 1,2,3,4,5

Any key can be overridden from the environment with ``EIWV_<SECTION>__<KEY>``,
e.g. ``EIWV_ENV__ALPHA=0.3``.  Unknown keys are an error.
"""

from __future__ import annotations

import os
import typing
from dataclasses import dataclass, field, fields, replace

from .env import ConfigError, EnvConfig

__all__ = [
    "DatasetSpec",
    "CrowdSpec",
    "EnvSpec",
    "AgentSpec",
    "RunSpec",
    "ExperimentConfig",
    "ENV_PREFIX",
    "parse_config",
    "load_config",
    "dump_config",
    "apply_env_overrides",
    "apply_overrides",
]

ENV_PREFIX = "EIWV_"


@dataclass(frozen=True)
class DatasetSpec:
    name: str = "bluebirds"  # stand-in preset, or "file" / "synth"
    path: str | None = None
    gold: str | None = None
    format: str = "triples_csv"
    num_classes: int | None = None
    seed: int = 0
    # synth parameters
    n_workers: int = 20
    n_tasks: int = 50
    classes: int = 2
    accuracy_low: float = 0.5
    accuracy_high: float = 0.9
    density: float = 1.0


@dataclass(frozen=True)
class CrowdSpec:
    h: float = 10.0
    epsilon: float = 0.1
    collusion: bool = True
    collusion_rate: int = 50
    group_fraction: float = 1.0
    deviant_strategy: str = "none"
    deviant_fraction: float = 0.0


@dataclass(frozen=True)
class EnvSpec:
    eta: float | None = None
    alpha: float = 0.2
    theta: float = 0.5
    p_min: float = 0.0
    p_max: float = 11.0
    tasks_per_step: int = 10
    window: int = 200
    horizon: int = 600
    inference: str = "ds_em"
    accuracy_term: str = "count"
    task_sampling: str = "auto"
    initial_accuracy: float = 0.5


@dataclass(frozen=True)
class AgentSpec:
    mode: str = "a2c_is_oracle"
    gamma: float = 0.99
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    entropy_coef: float = 1e-2
    batch_size: int = 32
    updates_per_step: int = 1
    buffer_capacity: int = 10_000
    p_floor: float = 1e-3
    hidden_sizes: tuple = (64, 64)
    init_sigma: float = 0.5
    squash: str = "clip"
    fixed_payment: float = 11.0
    dqn_lr: float = 1e-3


@dataclass(frozen=True)
class RunSpec:
    seeds: tuple = (1, 2, 3, 4, 5)
    out: str = "runs"
    jobs: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    crowd: CrowdSpec = field(default_factory=CrowdSpec)
    env: EnvSpec = field(default_factory=EnvSpec)
    agent: AgentSpec = field(default_factory=AgentSpec)
    run: RunSpec = field(default_factory=RunSpec)

    SECTIONS = ("dataset", "crowd", "env", "agent", "run")

    def env_config(self) -> EnvConfig:
        from .agent import mode_uses_oracle

        kw = {f.name: getattr(self.env, f.name) for f in fields(EnvSpec)}
        kw.update({f.name: getattr(self.crowd, f.name) for f in fields(CrowdSpec)})
        return EnvConfig(oracle=mode_uses_oracle(self.agent.mode), **kw)

    def agent_params(self) -> dict:
        a = self.agent
        if a.mode.startswith("a2c"):
            names = ("gamma", "lr_actor", "lr_critic", "entropy_coef", "batch_size", "updates_per_step",
                     "buffer_capacity", "p_floor", "init_sigma", "squash")
            out = {k: getattr(a, k) for k in names}
            out["hidden_sizes"] = tuple(a.hidden_sizes)
            return out
        if a.mode == "fixed":
            return {"payment": a.fixed_payment}
        if a.mode == "dqn_uniform":
            return {"gamma": a.gamma, "lr": a.dqn_lr, "batch_size": a.batch_size,
                    "buffer_capacity": a.buffer_capacity, "p_floor": a.p_floor,
                    "hidden_sizes": tuple(a.hidden_sizes)}
        return {}

    def validate(self) -> None:
        from .agent import AGENT_MODES, mode_uses_oracle
        from .dataset import STANDIN_PRESETS

        if self.agent.mode not in AGENT_MODES:
            raise ConfigError(f"unknown agent.mode {self.agent.mode!r}")
        d = self.dataset
        if d.name not in (*STANDIN_PRESETS, "file", "synth"):
            raise ConfigError(f"dataset.name must be a preset, 'file' or 'synth', got {d.name!r}")
        if d.name == "file" and not d.path:
            raise ConfigError("dataset.name = file needs dataset.path")
        if d.name == "file" and mode_uses_oracle(self.agent.mode) and not d.gold:
            raise ConfigError(f"mode {self.agent.mode} uses the oracle and needs dataset.gold")
        if not self.run.seeds:
            raise ConfigError("run.seeds is empty")
        if self.run.jobs < 1:
            raise ConfigError("run.jobs must be >= 1")
        self.env_config().validate()

    def with_overrides(self, pairs: dict) -> "ExperimentConfig":
        return apply_overrides(self, pairs)


# -- text (de)serialisation --------------------------------------------------


def _base_type(tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    return args[0] if args else tp


def _coerce(spec_cls, key: str, text: str):
    hints = typing.get_type_hints(spec_cls)
    if key not in hints:
        raise ConfigError(f"unknown key {spec_cls.__name__[:-4].lower()}.{key}")
    tp = hints[key]
    text = text.strip()
    optional = type(None) in typing.get_args(tp)
    if optional and text.lower() in ("none", ""):
        return None
    base = _base_type(tp)
    try:
        if base is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is tuple:
            return tuple(int(x) for x in text.split(",") if x.strip())
        return text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key}") from None


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def apply_overrides(cfg: ExperimentConfig, pairs: dict) -> ExperimentConfig:
    """Return ``cfg`` with dotted ``section.key`` entries replaced."""
    sections = {s: getattr(cfg, s) for s in ExperimentConfig.SECTIONS}
    for dotted, value in pairs.items():
        if "." not in dotted:
            raise ConfigError(f"key {dotted!r} needs a section prefix")
        section, key = dotted.split(".", 1)
        if section not in sections:
            raise ConfigError(f"unknown section {section!r}")
        spec = sections[section]
        if not isinstance(value, str):
            value = _format(value) if not isinstance(value, (list,)) else ",".join(map(str, value))
        sections[section] = replace(spec, **{key: _coerce(type(spec), key, value)})
    return ExperimentConfig(**sections)


def parse_config(text: str) -> ExperimentConfig:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        pairs[key] = value
    return apply_overrides(ExperimentConfig(), pairs)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for s in ExperimentConfig.SECTIONS:
        spec = getattr(cfg, s)
        for f in fields(spec):
            lines.append(f"{s}.{f.name} = {_format(getattr(spec, f.name))}")
    return "\n".join(lines) + "\n"


def apply_env_overrides(cfg: ExperimentConfig, environ=None) -> ExperimentConfig:
    environ = os.environ if environ is None else environ
    pairs = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(ENV_PREFIX) :].split("__", 1)
        pairs[f"{section.lower()}.{key.lower()}"] = value
    return apply_overrides(cfg, pairs) if pairs else cfg


def load_config(path=None, environ=None) -> ExperimentConfig:
    """Parse ``path`` (defaults only when ``None``) then apply env overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        with open(path) as fh:
            cfg = parse_config(fh.read())
    return apply_env_overrides(cfg, environ)
