"""Experiment configuration: one YAML file with a section per subsystem.

Every key has a default, so an empty file is a valid config. Command-line
``--set section.key=value`` overrides are applied after the file is read.
All randomness derives from ``seed`` through :func:`derive_seeds`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .agent import PAPER_HIDDEN, Td3Config
from .classifier import WaveformTask
from .env import RewardTable, ScenarioConfig


class ConfigError(ValueError):
    pass


@dataclass
class ClassifierSection:
    task: str = "MLA"
    input_len: int = 128
    sps: int = 4
    train_preset: str = "high_snr_train"
    epochs: int = 10
    per_class: int = 4000
    val_per_class: int = 1024
    encoder_sizes: list[int] = field(default_factory=lambda: [32, 32])
    head_sizes: list[int] = field(default_factory=lambda: [64])
    lr: float = 3e-3
    minibatch: int = 64
    min_accuracy: float = 0.80
    # Columns of the per-class accuracy report.
    report_presets: list[str] = field(default_factory=lambda: ["high_snr_train", "mid_snr", "low_mid_snr", "low_snr"])
    report_per_class: int = 1024


@dataclass
class ScenarioSection:
    mode: str = "MLA"
    presets: list[str] = field(default_factory=lambda: ["mid_snr"])
    switch_every: int = 0
    realizations: int | None = None
    jammer_power_db: float | None = None
    episode_length: int = 64
    batch_size: int = 32
    num_taps: int = 11
    alpha: float = 0.1
    target_class: int | None = None
    rewards: dict[str, float] = field(default_factory=lambda: dataclasses.asdict(RewardTable()))


@dataclass
class AgentSection:
    episodes: int = 300
    gamma: float = 0.99
    policy_delay: int = 2
    omega: float = 0.05
    batch_size: int = 64
    buffer_capacity: int = 10_000
    sigma_explore: float = 0.1
    sigma_smooth: float = 0.05
    c_smooth: float = 0.1
    actor_hidden: list[int] = field(default_factory=lambda: list(PAPER_HIDDEN))
    critic_hidden: list[int] = field(default_factory=lambda: list(PAPER_HIDDEN))
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    lr_schedule: str = "constant"
    lr_decay_steps: int = 20_000
    lr_floor: float = 0.1


@dataclass
class StaticSection:
    budget: int = 400
    n_channels: int = 32
    lam: int = 8


@dataclass
class EvaluateSection:
    episodes: int = 200
    # Fixed SNR points in dB; empty means the scenario's own SNR range only.
    snr_grid: list[float] = field(default_factory=list)
    workers: int = 1


@dataclass
class SweepSection:
    preset: str = "adv"
    powers_db: list[float] = field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0])
    episodes: int = 100


@dataclass
class ExperimentConfig:
    seed: int = 0
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    agent: AgentSection = field(default_factory=AgentSection)
    static: StaticSection = field(default_factory=StaticSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    # -- conversion -----------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        for f in dataclasses.fields(cls):
            if f.name not in d:
                continue
            if f.name == "seed":
                kw["seed"] = int(d["seed"])
            else:
                kw[f.name] = _section(f.default_factory, f.name, d[f.name])  # type: ignore[arg-type]
        return cls(**kw)

    def with_overrides(self, assignments) -> "ExperimentConfig":
        """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
        d = self.to_dict()
        for item in assignments or ():
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            value = yaml.safe_load(raw)
            parts = key.strip().split(".")
            node = d
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config key {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(d)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    # -- builders -------------------------------------------------------------

    def task(self) -> WaveformTask:
        c = self.classifier
        if c.task == "MLA":
            return WaveformTask.mla(c.input_len, c.sps)
        if c.task == "SLA":
            return WaveformTask.sla(c.input_len, c.sps)
        raise ConfigError(f"unknown classifier task {c.task!r}")

    def scenario_config(self, role: str = "train", **overrides) -> ScenarioConfig:
        """Scenario for ``role`` in {"train", "eval", "static"}; each role gets its own seeds."""
        s = self.scenario
        seeds = derive_seeds(self.seed)
        base = ScenarioConfig(
            mode=s.mode,
            task=self.task(),
            channel_presets=tuple(s.presets),
            switch_every=s.switch_every,
            channel_seed=seeds[f"channel_{role}"],
            channel_realizations=s.realizations,
            jammer_power_db=s.jammer_power_db,
            episode_length=s.episode_length,
            batch_size=s.batch_size,
            num_taps=s.num_taps,
            alpha=s.alpha,
            target_class=s.target_class,
            rewards=RewardTable(**s.rewards),
            seed=seeds[f"env_{role}"],
        )
        return base.with_(**overrides) if overrides else base

    def td3_config(self, state_dim: int, action_dim: int) -> Td3Config:
        a = self.agent
        return Td3Config(
            state_dim=state_dim,
            action_dim=action_dim,
            gamma=a.gamma,
            policy_delay=a.policy_delay,
            omega=a.omega,
            batch_size=a.batch_size,
            buffer_capacity=a.buffer_capacity,
            sigma_explore=a.sigma_explore,
            sigma_smooth=a.sigma_smooth,
            c_smooth=a.c_smooth,
            actor_hidden=tuple(a.actor_hidden),
            critic_hidden=tuple(a.critic_hidden),
            actor_lr=a.actor_lr,
            critic_lr=a.critic_lr,
            lr_schedule=a.lr_schedule,
            lr_decay_steps=a.lr_decay_steps,
            lr_floor=a.lr_floor,
            seed=derive_seeds(self.seed)["agent"],
        )


def _section(factory, name: str, value) -> Any:
    if value is None:
        return factory()
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    cls = type(factory())
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return cls(**value)


SUBSYSTEMS = (
    "classifier",
    "agent",
    "static",
    "channel_train",
    "channel_eval",
    "channel_static",
    "env_train",
    "env_eval",
    "env_static",
)


def derive_seeds(master: int) -> dict[str, int]:
    """Independent 31-bit seeds per subsystem from one master seed."""
    children = np.random.SeedSequence(int(master)).spawn(len(SUBSYSTEMS))
    return {name: int(ss.generate_state(1, np.uint32)[0] >> 1) for name, ss in zip(SUBSYSTEMS, children)}


def load_config(path=None, overrides=None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
    else:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        cfg = ExperimentConfig.from_dict(data)
    return cfg.with_overrides(overrides)
