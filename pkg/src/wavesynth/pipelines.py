"""Experiment pipelines shared by the command line and the acceptance tests.

Each function takes an :class:`~wavesynth.config.ExperimentConfig` and
returns plain Python data; writing files is left to :class:`RunDir`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import Td3Agent
from .baseline import NoFirPolicy, StaticFirPolicy, optimize_static_fir
from .classifier import ChannelFamily, ClassifierBundle, batch_accuracy, make_dataset, train_classifier
from .config import ExperimentConfig, derive_seeds
from .env import EpisodeLog, RewardTable, ScenarioConfig, WscEnv, run_episode

log = logging.getLogger(__name__)

OUTCOMES = ("success", "up", "same", "down")


# ---------------------------------------------------------------------------
# Classifier
# ---------------------------------------------------------------------------


def fit_classifier(cfg: ExperimentConfig) -> ClassifierBundle:
    c = cfg.classifier
    seeds = derive_seeds(cfg.seed)
    return train_classifier(
        cfg.task(),
        ChannelFamily(c.train_preset, seeds["classifier"]),
        epochs=c.epochs,
        seed=seeds["classifier"],
        per_class=c.per_class,
        val_per_class=c.val_per_class,
        encoder_sizes=tuple(c.encoder_sizes),
        head_sizes=tuple(c.head_sizes),
        lr=c.lr,
        minibatch=c.minibatch,
        min_accuracy=c.min_accuracy,
        vote_batch=cfg.scenario.batch_size,
    )


def classifier_report(cfg: ExperimentConfig, bundle: ClassifierBundle) -> list[dict]:
    """Majority-vote accuracy per class (rows) and channel preset (columns), no FIR."""
    c = cfg.classifier
    task = cfg.task()
    seed = derive_seeds(cfg.seed)["classifier"]
    table = {}
    for j, preset in enumerate(c.report_presets):
        # Fresh channel family per column, disjoint from the training draws.
        fam = ChannelFamily(preset, seed + 104_729 * (j + 1))
        x, y = make_dataset(task, fam, c.report_per_class, seed + j + 1, start_index=2 * 10**6)
        table[preset] = batch_accuracy(bundle, x, y, cfg.scenario.batch_size)
    return [
        {"class": name, **{p: round(float(table[p][k]), 6) for p in c.report_presets}}
        for k, name in enumerate(bundle.class_names)
    ]


# ---------------------------------------------------------------------------
# Agent
# ---------------------------------------------------------------------------


@dataclass
class TrainingRun:
    agent: Td3Agent
    logs: list[EpisodeLog]

    def step_rewards(self) -> np.ndarray:
        return np.concatenate([np.asarray(lg.rewards) for lg in self.logs]) if self.logs else np.zeros(0)


def train_agent(cfg: ExperimentConfig, classifier: ClassifierBundle, on_episode=None) -> TrainingRun:
    scenario = cfg.scenario_config("train")
    env = WscEnv(scenario, classifier)
    agent = Td3Agent(cfg.td3_config(scenario.state_dim, scenario.action_dim))
    logs = []
    for ep in range(cfg.agent.episodes):
        lg = run_episode(env, agent, "explore", ep)
        logs.append(lg)
        if on_episode is not None:
            on_episode(lg)
    return TrainingRun(agent, logs)


def fit_static(cfg: ExperimentConfig, classifier: ClassifierBundle) -> StaticFirPolicy:
    """One ES-optimized FIR per class over training draws of the configured scenario."""
    s = cfg.static
    return optimize_static_fir(
        cfg.scenario_config("static"),
        classifier,
        budget=s.budget,
        seed=derive_seeds(cfg.seed)["static"],
        n_channels=s.n_channels,
        lam=s.lam,
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalSummary:
    episodes: int
    steps: int
    accuracy: float
    class_accuracy: list[float]
    outcomes: dict[str, float] = field(default_factory=dict)

    def row(self) -> dict:
        out = {"episodes": self.episodes, "steps": self.steps, "accuracy": round(self.accuracy, 6)}
        out.update({f"acc_class{k}": round(a, 6) for k, a in enumerate(self.class_accuracy)})
        out.update({k: round(v, 6) for k, v in self.outcomes.items()})
        return out


def _outcome(reward: float, table: RewardTable) -> str:
    for name in OUTCOMES:
        if reward == getattr(table, name):
            return name
    raise ValueError(f"reward {reward} is not in the reward table")


def _run_chunk(args) -> list[EpisodeLog]:
    scenario, classifier, policy, episodes = args
    env = WscEnv(scenario, classifier)
    return [run_episode(env, policy, "exploit", ep) for ep in episodes]


def run_policy(scenario: ScenarioConfig, classifier: ClassifierBundle, policy, episodes: int, workers: int = 1) -> list[EpisodeLog]:
    """Frozen-policy episodes ``0..episodes-1``; results do not depend on ``workers``."""
    ids = list(range(episodes))
    if workers <= 1 or episodes < 2:
        return _run_chunk((scenario, classifier, policy, ids))
    chunks = [ids[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(scenario, classifier, policy, ch) for ch in chunks]))
    by_id = {lg.episode: lg for part in parts for lg in part}
    return [by_id[i] for i in ids]


def summarize(logs: list[EpisodeLog], num_classes: int, table: RewardTable) -> EvalSummary:
    steps = sum(len(lg.rewards) for lg in logs)
    correct = sum(int(np.sum(lg.correct)) for lg in logs)
    per_class = []
    for k in range(num_classes):
        accs = [lg.accuracy for lg in logs if lg.true_class == k]
        per_class.append(float(np.mean(accs)) if accs else float("nan"))
    counts = dict.fromkeys(OUTCOMES, 0)
    for lg in logs:
        for r in lg.rewards:
            counts[_outcome(r, table)] += 1
    outcomes = {k: v / steps for k, v in counts.items()} if steps else dict.fromkeys(OUTCOMES, 0.0)
    return EvalSummary(len(logs), steps, correct / steps if steps else 0.0, per_class, outcomes)


def evaluate_policy(
    scenario: ScenarioConfig, classifier: ClassifierBundle, policy, episodes: int, workers: int = 1
) -> EvalSummary:
    logs = run_policy(scenario, classifier, policy, episodes, workers)
    return summarize(logs, scenario.num_classes, scenario.rewards)


def evaluate_grid(cfg: ExperimentConfig, classifier: ClassifierBundle, policy, policy_name: str) -> list[dict]:
    """One row for the scenario's own SNR range plus one per fixed SNR grid point."""
    e = cfg.evaluate
    points: list[float | None] = [None, *e.snr_grid]
    rows = []
    for snr in points:
        scenario = cfg.scenario_config("eval", snr_db=snr)
        summary = evaluate_policy(scenario, classifier, policy, e.episodes, e.workers)
        rows.append({"policy": policy_name, "snr_db": "range" if snr is None else float(snr), **summary.row()})
    return rows


def sweep_jammer(cfg: ExperimentConfig, classifier: ClassifierBundle, policies: dict) -> list[dict]:
    """Accuracy of every policy at every jammer power on the sweep preset."""
    sw = cfg.sweep
    rows = []
    for power in sw.powers_db:
        scenario = cfg.scenario_config("eval", channel_presets=(sw.preset,), switch_every=0, jammer_power_db=float(power))
        for name, policy in policies.items():
            summary = evaluate_policy(scenario, classifier, policy, sw.episodes, cfg.evaluate.workers)
            rows.append({"jammer_power_db": float(power), "policy": name, **summary.row()})
    return rows


def make_policy(name: str, *, agent: Td3Agent | None = None, static: StaticFirPolicy | None = None, action_dim: int = 22):
    if name == "none":
        return NoFirPolicy(action_dim)
    if name == "drl":
        if agent is None:
            raise ValueError("policy 'drl' needs a trained agent")
        return agent
    if name == "static":
        if static is None:
            raise ValueError("policy 'static' needs an optimized static FIR")
        return static
    raise ValueError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# Run directories
# ---------------------------------------------------------------------------


def git_describe(cwd=None) -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=cwd or Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


class RunDir:
    """Output directory holding the resolved config, seeds, provenance and results."""

    def __init__(self, path, cfg: ExperimentConfig):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.write_text("config.yaml", cfg.dump())
        self.write_json("seeds.json", {"master": cfg.seed, **derive_seeds(cfg.seed)})
        self.write_text("git_describe.txt", git_describe() + "\n")

    def write_text(self, name: str, text: str) -> Path:
        p = self.path / name
        p.write_text(text)
        return p

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, rows: list[dict]) -> Path:
        return self.write_text(name, to_csv(rows))

    def write_jsonl(self, name: str, records) -> Path:
        return self.write_text(name, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
