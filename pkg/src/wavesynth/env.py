"""Closed loop between the FIR-synthesizing transmitter, the channel and the
frozen classifier: state encoding, reward and episode orchestration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelModel, channel_apply, channel_step
from .classifier import ChannelFamily, ClassifierBundle, Feedback, WaveformTask, classify_batch
from .dsp import clamp_taps, fir_apply


@dataclass(frozen=True)
class RewardTable:
    success: float = 2.0
    up: float = 1.0
    down: float = -1.0
    same: float = 0.0
    tolerance: float = 1e-4

    def __post_init__(self):
        if not self.success > self.up > self.same > self.down:
            raise ValueError("rewards must satisfy success > up > same > down")


def compute_reward(prev: Feedback | None, cur: Feedback, true_class: int, table: RewardTable = RewardTable()) -> float:
    if cur.majority_label == true_class:
        return table.success
    if prev is None:
        return table.same
    delta = float(cur.mean_softmax[true_class] - prev.mean_softmax[true_class])
    if delta > table.tolerance:
        return table.up
    if delta < -table.tolerance:
        return table.down
    return table.same


@dataclass(frozen=True)
class ScenarioConfig:
    """One experimental setting.

    ``channel_presets`` holds one preset, or several that take turns every
    ``switch_every`` steps (channel-switching scenario). ``target_class``
    pins the transmitted class (single-label problems); otherwise it is
    drawn per episode.
    """

    mode: str = "MLA"
    task: WaveformTask = field(default_factory=WaveformTask.mla)
    channel_presets: tuple[str, ...] = ("mid_snr",)
    switch_every: int = 0
    channel_seed: int = 1
    channel_realizations: int | None = None
    jammer_power_db: float | None = None
    snr_db: float | None = None
    episode_length: int = 64
    batch_size: int = 32
    num_taps: int = 11
    alpha: float = 0.1
    target_class: int | None = None
    rewards: RewardTable = field(default_factory=RewardTable)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("MLA", "SLA", "ADV"):
            raise ValueError(f"unknown scenario mode {self.mode!r}")
        if self.batch_size < 1 or self.episode_length < 1:
            raise ValueError("batch_size and episode_length must be >= 1")
        if not self.channel_presets:
            raise ValueError("need at least one channel preset")
        if len(self.channel_presets) > 1 and self.switch_every < 1:
            raise ValueError("switch_every must be >= 1 when several presets alternate")

    @property
    def num_classes(self) -> int:
        return self.task.num_classes

    @property
    def action_dim(self) -> int:
        return 2 * self.num_taps

    @property
    def state_dim(self) -> int:
        return 2 * self.num_classes + self.action_dim

    def families(self) -> list[ChannelFamily]:
        return [
            ChannelFamily(p, self.channel_seed + 7919 * i, self.channel_realizations, self.jammer_power_db, self.snr_db)
            for i, p in enumerate(self.channel_presets)
        ]

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def encode_state(mean_softmax, true_class: int, prev_action, num_classes: int) -> np.ndarray:
    """``[mean softmax | one-hot target | previous action]``."""
    onehot = np.zeros(num_classes)
    onehot[true_class] = 1.0
    return np.concatenate([np.asarray(mean_softmax, dtype=np.float64), onehot, np.asarray(prev_action, dtype=np.float64)])


def target_of_state(state, num_classes: int) -> int:
    return int(np.argmax(np.asarray(state)[num_classes : 2 * num_classes]))


@dataclass
class StepResult:
    feedback: Feedback
    state: np.ndarray
    reward: float
    channel_index: int


class WscEnv:
    """Transmitter + channel + receiver for one scenario and one frozen classifier."""

    def __init__(self, scenario: ScenarioConfig, classifier: ClassifierBundle):
        if classifier.num_classes != scenario.num_classes:
            raise ValueError("classifier and scenario disagree on the class count")
        if classifier.input_len != scenario.task.input_len:
            raise ValueError("classifier and scenario disagree on the waveform length")
        self.scenario = scenario
        self.classifier = classifier
        self._families = scenario.families()
        self.episode = -1
        self.t = 0
        self.true_class = 0
        self.channels: list[ChannelModel] = []
        self.prev_feedback: Feedback | None = None
        self.state = np.zeros(scenario.state_dim)

    def reset(self, episode: int) -> np.ndarray:
        sc = self.scenario
        self.episode = episode
        self.t = 0
        rng = np.random.default_rng([sc.seed, episode, 0x5EED])
        if sc.target_class is not None:
            self.true_class = sc.target_class
        else:
            self.true_class = int(rng.integers(sc.num_classes))
        self.channels = [fam.channel(episode) for fam in self._families]
        self.prev_feedback = None
        uniform = np.full(sc.num_classes, 1.0 / sc.num_classes)
        self.state = encode_state(uniform, self.true_class, np.zeros(sc.action_dim), sc.num_classes)
        return self.state

    @property
    def channel_index(self) -> int:
        if len(self.channels) == 1:
            return 0
        return (self.t // self.scenario.switch_every) % len(self.channels)

    def transmit(self, action) -> Feedback:
        """Send one batch with the taps given by ``action`` through the current channel."""
        sc = self.scenario
        rng = np.random.default_rng([sc.seed, self.episode, self.t, 0xB175])
        clean = sc.task.generate(rng, self.true_class, sc.batch_size)
        taps = clamp_taps(action, sc.alpha, sc.num_taps)
        received = channel_apply(fir_apply(clean, taps), self.channels[self.channel_index])
        return classify_batch(self.classifier, received)

    def step(self, action) -> StepResult:
        sc = self.scenario
        action = np.asarray(action, dtype=np.float64)
        idx = self.channel_index
        fb = self.transmit(action)
        reward = compute_reward(self.prev_feedback, fb, self.true_class, sc.rewards)
        self.state = encode_state(fb.mean_softmax, self.true_class, np.clip(action, -1, 1), sc.num_classes)
        self.prev_feedback = fb
        self.channels = [channel_step(ch) for ch in self.channels]
        self.t += 1
        return StepResult(fb, self.state, reward, idx)


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------


@dataclass
class EpisodeLog:
    episode: int
    true_class: int
    rewards: list[float] = field(default_factory=list)
    correct: list[bool] = field(default_factory=list)
    softmax_true: list[float] = field(default_factory=list)
    actions: list[list[float]] = field(default_factory=list)
    success_reward: float = 2.0

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.correct)) if self.correct else 0.0

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    def records(self) -> list[dict]:
        assert self.accuracy == (
            float(np.mean([r == self.success_reward for r in self.rewards])) if self.rewards else 0.0
        ), "episode accuracy must equal the fraction of success rewards"
        return [
            {
                "episode": self.episode,
                "step": i,
                "reward": r,
                "correct": c,
                "softmax_true": p,
                "action": a,
            }
            for i, (r, c, p, a) in enumerate(zip(self.rewards, self.correct, self.softmax_true, self.actions))
        ]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.records())


def run_episode(env: WscEnv, policy, mode: str = "exploit", episode: int = 0, on_train=None) -> EpisodeLog:
    """Play ``episode_length`` steps with ``policy``.

    ``policy`` needs ``act(state, mode)``; in ``explore`` mode it must also
    provide ``train_step(trajectory)``, which is called after every step.
    """
    from .agent import Trajectory

    if mode not in ("explore", "exploit"):
        raise ValueError(f"mode must be 'explore' or 'exploit', got {mode!r}")
    sc = env.scenario
    state = env.reset(episode)
    log = EpisodeLog(episode, env.true_class, success_reward=sc.rewards.success)
    for _ in range(sc.episode_length):
        action = np.asarray(policy.act(state, mode), dtype=np.float64)
        res = env.step(action)
        if mode == "explore":
            diag = policy.train_step(Trajectory(state, action, res.reward, res.state))
            if on_train is not None:
                on_train(diag)
        log.rewards.append(res.reward)
        log.correct.append(res.feedback.majority_label == env.true_class)
        log.softmax_true.append(float(res.feedback.mean_softmax[env.true_class]))
        log.actions.append([float(v) for v in action])
        state = res.state
    return log
