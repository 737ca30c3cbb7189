"""TD3 agent that outputs FIR tap offsets.

The actor maps a state to ``2M`` values in ``(-1, 1)`` (tanh head); the
environment turns them into feasible taps with :func:`wavesynth.dsp.clamp_taps`.
Twin critics score ``(state, action)`` pairs, target copies of all three
networks trail the main ones through Polyak averaging, and the actor and
targets are only updated every ``policy_delay`` steps.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import nn
from .nn import ContractError

PAPER_HIDDEN = (30,) * 10


@dataclass(frozen=True)
class Td3Config:
    state_dim: int
    action_dim: int = 22
    gamma: float = 0.99
    policy_delay: int = 2
    omega: float = 0.05
    batch_size: int = 64
    buffer_capacity: int = 10_000
    sigma_explore: float = 0.1
    sigma_smooth: float = 0.05
    c_smooth: float = 0.1
    actor_hidden: tuple[int, ...] = PAPER_HIDDEN
    critic_hidden: tuple[int, ...] = PAPER_HIDDEN
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    lr_schedule: str = "constant"  # or "linear"
    lr_decay_steps: int = 20_000
    lr_floor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("state_dim and action_dim must be positive")
        if self.policy_delay < 1 or self.batch_size < 1:
            raise ValueError("policy_delay and batch_size must be >= 1")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity must be at least batch_size")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actor_hidden"] = list(self.actor_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Td3Config":
        d = dict(d)
        d["actor_hidden"] = tuple(d.get("actor_hidden", PAPER_HIDDEN))
        d["critic_hidden"] = tuple(d.get("critic_hidden", PAPER_HIDDEN))
        return cls(**d)


@dataclass
class Trajectory:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self) -> int:
        return len(self.r)


class ReplayBuffer:
    """Fixed-capacity ring buffer sampled uniformly with replacement."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, seed=0):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.size = 0
        self._head = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def push(self, t: Trajectory) -> None:
        i = self._head
        self.s[i], self.a[i], self.r[i], self.s_next[i] = t.s, t.a, t.r, t.s_next
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int) -> Batch:
        if self.size < n:
            raise ContractError(f"cannot sample {n} entries from a buffer holding {self.size}")
        idx = self._rng.integers(0, self.size, size=n)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx])


@dataclass
class StepDiagnostics:
    step: int
    critic_loss: float | None
    actor_updated: bool
    buffer_size: int

    def to_dict(self) -> dict:
        return asdict(self)


class Td3Agent:
    def __init__(self, config: Td3Config):
        self.config = c = config
        seeds = np.random.SeedSequence(c.seed).spawn(7)
        rngs = [np.random.default_rng(s) for s in seeds]
        self.actor = nn.Mlp.build([c.state_dim, *c.actor_hidden, c.action_dim], "relu", "tanh", rngs[0])
        critic_sizes = [c.state_dim + c.action_dim, *c.critic_hidden, 1]
        self.critic1 = nn.Mlp.build(critic_sizes, "relu", "linear", rngs[1])
        self.critic2 = nn.Mlp.build(critic_sizes, "relu", "linear", rngs[2])
        self.target_actor = self.actor.copy()
        self.target_critic1 = self.critic1.copy()
        self.target_critic2 = self.critic2.copy()
        self.actor_opt = nn.AdamState.for_net(self.actor, c.actor_lr)
        self.critic1_opt = nn.AdamState.for_net(self.critic1, c.critic_lr)
        self.critic2_opt = nn.AdamState.for_net(self.critic2, c.critic_lr)
        self.buffer = ReplayBuffer(c.buffer_capacity, c.state_dim, c.action_dim, rngs[3])
        self._explore_rng = rngs[4]
        self._smooth_rng = rngs[5]
        self.step = 0
        self.last_critic_losses: tuple[float, float] | None = None

    # -- acting -------------------------------------------------------------

    def _check_state(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if s.shape[-1] != self.config.state_dim:
            raise ValueError(f"state has dim {s.shape[-1]}, agent expects {self.config.state_dim}")
        return s

    def select_action(self, s, mode: str = "exploit") -> np.ndarray:
        s = self._check_state(s)
        a = self.actor.predict(s)
        if mode == "exploit":
            return a
        if mode != "explore":
            raise ValueError(f"mode must be 'explore' or 'exploit', got {mode!r}")
        noise = self._explore_rng.normal(0.0, self.config.sigma_explore, size=a.shape)
        return np.clip(a + noise, -1.0, 1.0)

    def act(self, s, mode: str = "exploit") -> np.ndarray:
        return self.select_action(s, mode)

    # -- learning -----------------------------------------------------------

    @staticmethod
    def _sa(s, a) -> np.ndarray:
        return np.concatenate([s, a], axis=1)

    def target_actions(self, s_next: np.ndarray) -> np.ndarray:
        """Target-policy smoothing: clipped Gaussian noise on the target actor's action."""
        c = self.config
        a = self.target_actor.predict(s_next)
        if c.sigma_smooth > 0:
            eps = np.clip(self._smooth_rng.normal(0.0, c.sigma_smooth, size=a.shape), -c.c_smooth, c.c_smooth)
            a = a + eps
        return np.clip(a, -1.0, 1.0)

    def target_q_values(self, batch: Batch, a_next: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sa = self._sa(batch.s_next, a_next)
        return self.target_critic1.predict(sa)[:, 0], self.target_critic2.predict(sa)[:, 0]

    def compute_targets(self, batch: Batch) -> np.ndarray:
        """``y = r + gamma * min(Q1'(s', a~), Q2'(s', a~))``."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        q1, q2 = self.target_q_values(batch, self.target_actions(batch.s_next))
        return batch.r + self.config.gamma * np.minimum(q1, q2)

    def critic_update(self, batch: Batch, targets: np.ndarray | None = None) -> float:
        """One Adam step per critic on its mean-squared Bellman error.

        Returns the sum of the two pre-step losses.
        """
        y = self.compute_targets(batch) if targets is None else np.asarray(targets, dtype=np.float64)
        sa = self._sa(batch.s, batch.a)
        n = len(batch)
        losses = []
        for net, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = net.forward(sa)
            err = q[:, 0] - y
            losses.append(float(np.mean(err * err)))
            grads, _ = net.backward(cache, (2.0 / n) * err[:, None])
            nn.adam_step(net, grads, opt)
        self.last_critic_losses = (losses[0], losses[1])
        return losses[0] + losses[1]

    def actor_gradients(self, s: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``-mean_j Q1(s_j, pi(s_j))`` w.r.t. the actor parameters."""
        a, actor_cache = self.actor.forward(s)
        _, critic_cache = self.critic1.forward(self._sa(s, a))
        n = s.shape[0]
        _, g_in = self.critic1.backward(critic_cache, np.full((n, 1), -1.0 / n))
        grads, _ = self.actor.backward(actor_cache, g_in[:, self.config.state_dim :])
        return grads

    def _check_schedule(self) -> None:
        if self.step % self.config.policy_delay:
            raise ContractError(f"actor update at step {self.step} is off the every-{self.config.policy_delay} schedule")
        if len(self.buffer) < self.config.batch_size:
            raise ContractError("actor update before the replay buffer holds a full batch")

    def actor_update(self, batch: Batch) -> None:
        """Deterministic policy-gradient ascent on ``Q1``; critics are left untouched."""
        self._check_schedule()
        nn.adam_step(self.actor, self.actor_gradients(batch.s), self.actor_opt)

    def polyak_update(self) -> None:
        self._check_schedule()
        w = self.config.omega
        self.target_actor.soft_update(self.actor, w)
        self.target_critic1.soft_update(self.critic1, w)
        self.target_critic2.soft_update(self.critic2, w)

    def _apply_lr_schedule(self) -> None:
        c = self.config
        if c.lr_schedule != "linear":
            return
        frac = max(c.lr_floor, 1.0 - self.step / c.lr_decay_steps)
        self.actor_opt.lr = c.actor_lr * frac
        self.critic1_opt.lr = self.critic2_opt.lr = c.critic_lr * frac

    def train_step(self, t: Trajectory) -> StepDiagnostics:
        """Store ``t``; once a batch is available update critics, and every
        ``policy_delay`` steps also the actor and the targets."""
        self.buffer.push(t)
        loss = None
        actor_updated = False
        if len(self.buffer) >= self.config.batch_size:
            self._apply_lr_schedule()
            batch = self.buffer.sample(self.config.batch_size)
            loss = self.critic_update(batch)
            if self.step % self.config.policy_delay == 0:
                self.actor_update(batch)
                self.polyak_update()
                actor_updated = True
        diag = StepDiagnostics(self.step, loss, actor_updated, len(self.buffer))
        self.step += 1
        return diag

    # -- persistence ----------------------------------------------------------

    _NETS = ("actor", "critic1", "critic2", "target_actor", "target_critic1", "target_critic2")

    def networks(self) -> dict[str, nn.Mlp]:
        return {name: getattr(self, name) for name in self._NETS}

    def actor_checksum(self) -> str:
        return self.actor.checksum()

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in self._NETS:
            h.update(nn.to_bytes(getattr(self, name)))
        return h.hexdigest()

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, net in self.networks().items():
            nn.save(net, directory / f"{name}.chnn")
        meta = {"config": self.config.to_dict(), "step": self.step}
        (directory / "agent.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "Td3Agent":
        """Restore networks and step counter (optimizer moments and the replay
        buffer are not persisted)."""
        directory = Path(directory)
        meta = json.loads((directory / "agent.json").read_text())
        agent = cls(Td3Config.from_dict(meta["config"]))
        for name in cls._NETS:
            getattr(agent, name).load_from(nn.load(directory / f"{name}.chnn"))
        agent.step = int(meta["step"])
        return agent
