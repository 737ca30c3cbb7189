"""The receiver-side signal classifier.

It is trained once under controlled channel conditions and then frozen; at
run time it only labels batches of received waveforms and reports a
majority-vote label plus the batch-averaged softmax vector.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .channel import ChannelModel, channel_apply, get_preset
from .waveform import DeviceImpairment, ModScheme, apply_impairment, random_waveforms

log = logging.getLogger(__name__)

MLA_CLASSES = ("BPSK", "QAM16", "QAM64")

# Four nominally identical QPSK radios told apart by front-end imperfections.
SLA_DEVICES = {
    "dev0": DeviceImpairment(1.00, 0.00, 0.00 + 0.00j, 0.0),
    "dev1": DeviceImpairment(1.08, 0.05, 0.03 - 0.02j, 0.0),
    "dev2": DeviceImpairment(0.93, -0.06, -0.02 + 0.03j, 0.0),
    "dev3": DeviceImpairment(1.04, 0.09, 0.00 - 0.04j, 0.0),
}


class TrainingError(RuntimeError):
    """Classifier training did not reach the minimum validation accuracy."""


@dataclass(frozen=True)
class WaveformTask:
    """What the transmitter can send: one generator per class."""

    kind: str = "mla"
    class_names: tuple[str, ...] = MLA_CLASSES
    input_len: int = 128
    sps: int = 4

    def __post_init__(self):
        if self.kind not in ("mla", "sla"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if len(self.class_names) < 2:
            raise ValueError("need at least two classes")
        if self.input_len % self.sps:
            raise ValueError("input_len must be a multiple of sps")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def generate(self, rng: np.random.Generator, label: int, count: int) -> np.ndarray:
        """``count`` clean transmit waveforms of class ``label``, shape ``(count, L)``."""
        name = self.class_names[label]
        if self.kind == "mla":
            return random_waveforms(rng, ModScheme.parse(name), count, self.input_len, self.sps)
        x = random_waveforms(rng, ModScheme.QPSK, count, self.input_len, self.sps)
        return apply_impairment(x, SLA_DEVICES[name], int(rng.integers(2**63)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "class_names": list(self.class_names), "input_len": self.input_len, "sps": self.sps}

    @classmethod
    def from_dict(cls, d: dict) -> "WaveformTask":
        return cls(d["kind"], tuple(d["class_names"]), int(d["input_len"]), int(d["sps"]))

    @classmethod
    def mla(cls, input_len: int = 128, sps: int = 4, classes=MLA_CLASSES) -> "WaveformTask":
        return cls("mla", tuple(classes), input_len, sps)

    @classmethod
    def sla(cls, input_len: int = 128, sps: int = 4) -> "WaveformTask":
        return cls("sla", tuple(SLA_DEVICES), input_len, sps)


@dataclass(frozen=True)
class ChannelFamily:
    """A reproducible stream of channel realizations from one preset.

    ``realizations`` limits the family to a fixed pool (e.g. the handful of
    channel conditions seen on one measurement day); ``None`` means fresh
    draws forever.
    """

    preset: str
    family_seed: int = 0
    realizations: int | None = None
    jammer_power_db: float | None = None
    snr_db: float | None = None

    def channel(self, index: int) -> ChannelModel:
        if self.realizations:
            index %= self.realizations
        seed = int(np.random.SeedSequence([self.family_seed, index]).generate_state(1, np.uint64)[0])
        return get_preset(self.preset).sample(seed, jammer_power_db=self.jammer_power_db, snr_db=self.snr_db)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "family_seed": self.family_seed,
            "realizations": self.realizations,
            "jammer_power_db": self.jammer_power_db,
            "snr_db": self.snr_db,
        }


@dataclass(frozen=True)
class Feedback:
    majority_label: int
    mean_softmax: np.ndarray
    batch_size: int
    votes: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]


class PooledNet:
    """Shared encoder over consecutive ``window``-sample chunks, mean pooling,
    dense softmax head.

    Input is the interleaved ``2L`` vector. With ``window == L`` there is a
    single chunk and the model reduces to a plain dense MLP.
    """

    def __init__(self, encoder: nn.Mlp, head: nn.Mlp, window: int):
        if encoder.input_dim != 2 * window:
            raise ValueError(f"encoder input dim {encoder.input_dim} != 2 * window ({window})")
        if encoder.output_dim != head.input_dim:
            raise ValueError("encoder output does not feed the head")
        if head.layers[-1].activation is not nn.Activation.SOFTMAX:
            raise ValueError("classifier head must end in softmax")
        self.encoder, self.head, self.window = encoder, head, window

    @classmethod
    def build(cls, input_len: int, window: int, encoder_sizes, head_sizes, num_classes: int, seed) -> "PooledNet":
        if input_len % window:
            raise ValueError("input_len must be a multiple of window")
        rng = np.random.default_rng(seed)
        encoder = nn.Mlp.build([2 * window, *encoder_sizes], "relu", "relu", rng)
        head = nn.Mlp.build([encoder_sizes[-1], *head_sizes, num_classes], "relu", "softmax", rng)
        return cls(encoder, head, window)

    @property
    def output_dim(self) -> int:
        return self.head.output_dim

    def forward(self, feats: np.ndarray):
        b, d = feats.shape
        if d % (2 * self.window):
            raise ValueError(f"input dim {d} is not a multiple of 2 * window")
        chunks = d // (2 * self.window)
        emb, enc_cache = self.encoder.forward(feats.reshape(b * chunks, 2 * self.window))
        pooled = emb.reshape(b, chunks, -1).mean(axis=1)
        probs, head_cache = self.head.forward(pooled)
        return probs, (enc_cache, head_cache, b, chunks)

    def predict(self, feats: np.ndarray) -> np.ndarray:
        return self.forward(feats)[0]

    def backward(self, cache, grad) -> list[np.ndarray]:
        enc_cache, head_cache, b, chunks = cache
        head_grads, g_pool = self.head.backward(head_cache, grad)
        g_emb = np.repeat(g_pool[:, None, :] / chunks, chunks, axis=1).reshape(b * chunks, -1)
        enc_grads, _ = self.encoder.backward(enc_cache, g_emb)
        return enc_grads + head_grads

    def parameters(self) -> list[np.ndarray]:
        return self.encoder.parameters() + self.head.parameters()

    def checksum(self) -> str:
        return hashlib.sha256(nn.to_bytes(self.encoder) + nn.to_bytes(self.head)).hexdigest()


@dataclass
class ClassifierBundle:
    net: PooledNet
    class_names: tuple[str, ...]
    input_len: int
    train_scenario: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ValueError("need at least two classes")
        if self.input_len % self.net.window:
            raise ValueError(f"input_len {self.input_len} is not a multiple of window {self.net.window}")
        if self.net.output_dim != len(self.class_names):
            raise ValueError("net output dim does not match the class count")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def softmax(self, batch) -> np.ndarray:
        return self.net.predict(features(batch, self.input_len))

    def checksum(self) -> str:
        return self.net.checksum()

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        nn.save(self.net.encoder, directory / "classifier_encoder.chnn")
        nn.save(self.net.head, directory / "classifier_head.chnn")
        meta = {
            "class_names": list(self.class_names),
            "input_len": self.input_len,
            "window": self.net.window,
            "train_scenario": self.train_scenario,
        }
        (directory / "classifier.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "ClassifierBundle":
        directory = Path(directory)
        meta = json.loads((directory / "classifier.json").read_text())
        net = PooledNet(
            nn.load(directory / "classifier_encoder.chnn"),
            nn.load(directory / "classifier_head.chnn"),
            int(meta["window"]),
        )
        return cls(net, tuple(meta["class_names"]), int(meta["input_len"]), meta.get("train_scenario", {}))


def features(batch, input_len: int) -> np.ndarray:
    """Interleave I and Q: ``(W, L)`` complex -> ``(W, 2L)`` real."""
    arr = np.atleast_2d(np.asarray(batch, dtype=np.complex128))
    if arr.shape[-1] != input_len:
        raise ValueError(f"waveform length {arr.shape[-1]} != classifier input length {input_len}")
    return np.ascontiguousarray(arr).view(np.float64).reshape(arr.shape[0], 2 * input_len)


def classify_batch(bundle: ClassifierBundle, batch) -> Feedback:
    """Majority vote over per-waveform argmaxes (ties -> lowest index) plus mean softmax."""
    probs = bundle.softmax(batch)
    votes = np.argmax(probs, axis=1)
    counts = np.bincount(votes, minlength=bundle.num_classes)
    return Feedback(int(np.argmax(counts)), probs.mean(axis=0), probs.shape[0], votes)


def make_dataset(
    task: WaveformTask,
    channels: ChannelFamily,
    per_class: int,
    seed: int,
    group: int = 16,
    start_index: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Received waveforms and labels; every ``group`` examples share one channel draw."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    index = start_index
    for label in range(task.num_classes):
        remaining = per_class
        while remaining > 0:
            n = min(group, remaining)
            clean = task.generate(rng, label, n)
            xs.append(channel_apply(clean, channels.channel(index)))
            ys.append(np.full(n, label))
            index += 1
            remaining -= n
    return np.concatenate(xs), np.concatenate(ys)


def batch_accuracy(bundle: ClassifierBundle, x: np.ndarray, y: np.ndarray, batch: int = 32) -> np.ndarray:
    """Per-class accuracy of majority-vote decisions over consecutive ``batch`` waveforms."""
    acc = np.zeros(bundle.num_classes)
    for label in range(bundle.num_classes):
        xs = x[y == label]
        n = (len(xs) // batch) * batch
        if n == 0:
            acc[label] = np.nan
            continue
        votes = np.argmax(bundle.softmax(xs[:n]), axis=1).reshape(-1, batch)
        decisions = [np.argmax(np.bincount(v, minlength=bundle.num_classes)) for v in votes]
        acc[label] = np.mean(np.asarray(decisions) == label)
    return acc


def waveform_accuracy(bundle: ClassifierBundle, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    pred = np.argmax(bundle.softmax(x), axis=1)
    return np.array([np.mean(pred[y == c] == c) for c in range(bundle.num_classes)])


def train_classifier(
    task: WaveformTask,
    channels: ChannelFamily,
    *,
    epochs: int = 10,
    seed: int = 0,
    per_class: int = 4000,
    val_per_class: int = 1024,
    window: int | None = None,
    encoder_sizes: tuple[int, ...] = (32, 32),
    head_sizes: tuple[int, ...] = (64,),
    lr: float = 3e-3,
    minibatch: int = 64,
    min_accuracy: float = 0.80,
    vote_batch: int = 32,
) -> ClassifierBundle:
    """Fit the classifier with cross-entropy and Adam.

    ``window`` defaults to one symbol (``task.sps`` samples). Raises
    :class:`TrainingError` if the in-distribution majority-vote accuracy of
    any class stays below ``min_accuracy``.
    """
    window = task.sps if window is None else window
    ss = np.random.SeedSequence(seed)
    data_seed, val_seed, init_seed, shuffle_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(4))
    x, y = make_dataset(task, channels, per_class, data_seed)
    # Validation draws its channels from a disjoint index range of the same family.
    xv, yv = make_dataset(task, channels, val_per_class, val_seed, start_index=10**6)
    feats = features(x, task.input_len)

    net = PooledNet.build(task.input_len, window, encoder_sizes, head_sizes, task.num_classes, init_seed)
    params = net.parameters()
    opt = nn.AdamState(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])
    shim = _ParamView(net)
    rng = np.random.default_rng(shuffle_seed)
    onehot = np.eye(task.num_classes)[y]
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), minibatch):
            idx = order[start : start + minibatch]
            probs, cache = net.forward(feats[idx])
            total += -np.sum(np.log(np.clip(probs[np.arange(len(idx)), y[idx]], 1e-300, None)))
            # d(mean cross-entropy)/d(softmax output)
            grad = -onehot[idx] / np.clip(probs, 1e-300, None) / len(idx)
            nn.adam_step(shim, net.backward(cache, grad), opt)
        log.debug("epoch %d: loss %.4f", epoch, total / len(y))

    bundle = ClassifierBundle(
        net,
        task.class_names,
        task.input_len,
        {"task": task.to_dict(), "channels": channels.to_dict(), "seed": seed, "epochs": epochs},
    )
    acc = batch_accuracy(bundle, xv, yv, vote_batch)
    bundle.train_scenario["validation_accuracy"] = [round(float(a), 6) for a in acc]
    if np.nanmin(acc) < min_accuracy:
        raise TrainingError(f"validation accuracy {np.round(acc, 3).tolist()} below {min_accuracy}")
    return bundle


class _ParamView:
    # Lets adam_step drive the encoder and head as one parameter list.
    def __init__(self, net: PooledNet):
        self.net = net

    def parameters(self):
        return self.net.parameters()

    def mark_updated(self):
        self.net.encoder.mark_updated()
        self.net.head.mark_updated()

    def all_finite(self):
        return self.net.encoder.all_finite() and self.net.head.all_finite()
