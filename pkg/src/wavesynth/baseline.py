"""Comparison policies: plain transmission and one offline-optimized FIR per class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import channel_apply
from .classifier import ClassifierBundle, classify_batch
from .dsp import clamp_taps, fir_apply
from .env import ScenarioConfig, target_of_state


class NoFirPolicy:
    """Always transmits through ``h0 = [1, 0, ..., 0]``."""

    def __init__(self, action_dim: int = 22):
        self.action_dim = action_dim

    def act(self, state=None, mode: str = "exploit") -> np.ndarray:
        return no_fir_policy(self.action_dim)


def no_fir_policy(action_dim: int = 22) -> np.ndarray:
    return np.zeros(action_dim)


@dataclass
class StaticFirPolicy:
    """A fixed action per class, chosen from the target one-hot in the state."""

    actions: dict[int, np.ndarray]
    num_classes: int

    def act(self, state, mode: str = "exploit") -> np.ndarray:
        return np.array(self.actions[target_of_state(state, self.num_classes)], copy=True)

    def to_dict(self) -> dict:
        return {str(k): [float(v) for v in a] for k, a in sorted(self.actions.items())}


@dataclass
class EsResult:
    best: np.ndarray
    best_score: float
    history: list[float] = field(default_factory=list)  # best score after each evaluation
    evaluations: int = 0


def es_maximize(score, dim: int, budget: int, seed: int = 0, lam: int = 8, sigma0: float = 0.3, x0=None) -> EsResult:
    """Elitist (1+lambda) evolution strategy on the box ``[-1, 1]^dim``.

    Step size follows the one-fifth success rule per generation. An offspring
    replaces the parent only if it scores at least as well.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    parent = np.zeros(dim) if x0 is None else np.clip(np.asarray(x0, dtype=np.float64), -1, 1)
    best = score(parent)
    history = [best]
    used = 1
    sigma = sigma0
    while used < budget:
        n = min(lam, budget - used)
        kids = np.clip(parent + sigma * rng.standard_normal((n, dim)), -1.0, 1.0)
        scores = [score(k) for k in kids]
        successes = 0
        for k, s in zip(kids, scores):
            used += 1
            if s > best:
                successes += 1
            if s >= best:
                parent, best = k, s
            history.append(best)
        rate = successes / n
        sigma = float(np.clip(sigma * np.exp((rate - 0.2) / 0.8), 0.01, 1.0))
    return EsResult(parent, best, history, used)


def static_score_fn(scenario: ScenarioConfig, classifier: ClassifierBundle, label: int, n_channels: int, seed: int):
    """Mean majority-vote success of ``label`` over a frozen set of channel draws.

    The true-class softmax is added with weight 1e-3 so plateaus of equal
    success still rank candidates.
    """
    fams = scenario.families()
    rng = np.random.default_rng([seed, label])
    channels = [fams[i % len(fams)].channel(10**7 + i) for i in range(n_channels)]
    clean = [scenario.task.generate(rng, label, scenario.batch_size) for _ in channels]

    def score(action) -> float:
        taps = clamp_taps(action, scenario.alpha, scenario.num_taps)
        hits = 0.0
        soft = 0.0
        for ch, x in zip(channels, clean):
            fb = classify_batch(classifier, channel_apply(fir_apply(x, taps), ch))
            hits += fb.majority_label == label
            soft += fb.mean_softmax[label]
        return (hits + 1e-3 * soft) / len(channels)

    return score


def optimize_static_fir(
    scenario: ScenarioConfig,
    classifier: ClassifierBundle,
    budget: int = 400,
    seed: int = 0,
    n_channels: int = 32,
    lam: int = 8,
) -> StaticFirPolicy:
    """Offline derivative-free search of one FIR per class over training channels."""
    if budget < 100:
        raise ValueError("budget must be at least 100 evaluations")
    labels = [scenario.target_class] if scenario.target_class is not None else range(scenario.num_classes)
    actions = {}
    for label in labels:
        score = static_score_fn(scenario, classifier, label, n_channels, seed)
        actions[label] = es_maximize(score, scenario.action_dim, budget, seed=seed + 101 * label, lam=lam).best
    return StaticFirPolicy(actions, scenario.num_classes)
