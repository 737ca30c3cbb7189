import numpy as np
import pytest

from oracles import relative_error
from wavesynth.classifier import (
    ChannelFamily,
    ClassifierBundle,
    Feedback,
    PooledNet,
    TrainingError,
    WaveformTask,
    batch_accuracy,
    classify_batch,
    features,
    make_dataset,
    train_classifier,
    waveform_accuracy,
)


class FixedBundle:
    """Stand-in with scripted per-waveform softmax rows."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        self.num_classes = self.probs.shape[1]

    def softmax(self, batch):
        return self.probs[: len(batch)]


class TestFeatures:
    def test_interleaving(self):
        f = features(np.array([[1 + 2j, 3 - 4j]]), 2)
        np.testing.assert_array_equal(f, [[1, 2, 3, -4]])

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            features(np.zeros((2, 5), complex), 4)


class TestClassifyBatch:
    def test_single_waveform(self):
        fb = classify_batch(FixedBundle([[0.2, 0.5, 0.3]]), np.zeros((1, 4)))
        assert fb.majority_label == 1

    def test_majority(self):
        probs = [[0.9, 0.1], [0.6, 0.4], [0.1, 0.9]]
        assert classify_batch(FixedBundle(probs), np.zeros((3, 4))).majority_label == 0

    def test_tie_goes_to_lowest_index(self):
        probs = [[0.1, 0.2, 0.7], [0.1, 0.8, 0.1], [0.2, 0.1, 0.7], [0.1, 0.8, 0.1]]
        assert classify_batch(FixedBundle(probs), np.zeros((4, 4))).majority_label == 1

    def test_mean_softmax_matches_individual(self, mla_classifier):
        rng = np.random.default_rng(0)
        task = WaveformTask.mla()
        x = task.generate(rng, 1, 32)
        fb = classify_batch(mla_classifier, x)
        brute = np.mean([mla_classifier.softmax(row[None, :])[0] for row in x], axis=0)
        assert np.max(np.abs(fb.mean_softmax - brute)) < 1e-12
        assert abs(fb.mean_softmax.sum() - 1) < 1e-6
        assert fb.batch_size == 32

    def test_permutation_invariance(self, mla_classifier):
        rng = np.random.default_rng(1)
        x = WaveformTask.mla().generate(rng, 2, 32)
        a = classify_batch(mla_classifier, x)
        b = classify_batch(mla_classifier, x[rng.permutation(32)])
        assert a.majority_label == b.majority_label
        np.testing.assert_allclose(a.mean_softmax, b.mean_softmax, atol=1e-14)

    def test_wrong_length(self, mla_classifier):
        with pytest.raises(ValueError):
            classify_batch(mla_classifier, np.zeros((2, 64), complex))


class TestPooledNet:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        net = PooledNet.build(8, 2, (5, 4), (6,), 3, 3)
        x = rng.normal(size=(3, 16))
        up = rng.normal(size=(3, 3))
        _, cache = net.forward(x)
        grads = net.backward(cache, up)

        def obj():
            return float(np.sum(up * net.predict(x)))

        for p, g in zip(net.parameters(), grads):
            fd = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + 1e-5
                hi = obj()
                p[idx] = old - 1e-5
                lo = obj()
                p[idx] = old
                fd[idx] = (hi - lo) / 2e-5
            assert relative_error(g, fd) < 1e-4

    def test_single_window_is_plain_mlp(self):
        net = PooledNet.build(4, 4, (6,), (5,), 2, 0)
        x = np.random.default_rng(3).normal(size=(2, 8))
        np.testing.assert_allclose(net.predict(x), net.head.predict(net.encoder.predict(x)), atol=1e-15)

    def test_requires_softmax_head(self):
        from wavesynth import nn

        with pytest.raises(ValueError):
            PooledNet(nn.Mlp.build([4, 3]), nn.Mlp.build([3, 2]), 2)


class TestTraining:
    def test_high_snr_accuracy(self, mla_classifier):
        task = WaveformTask.mla()
        x, y = make_dataset(task, ChannelFamily("high_snr_train", 99), 512, 7)
        assert np.all(waveform_accuracy(mla_classifier, x, y) >= 0.95)
        assert np.all(batch_accuracy(mla_classifier, x, y) >= 0.95)
        assert min(mla_classifier.train_scenario["validation_accuracy"]) >= 0.95

    def test_two_class_toy(self):
        task = WaveformTask.mla(classes=("BPSK", "QAM16"))
        bundle = train_classifier(task, ChannelFamily("clean", 1), seed=1, per_class=1000, val_per_class=256, epochs=5)
        x, y = make_dataset(task, ChannelFamily("high_snr_train", 3, snr_db=30.0), 512, 9)
        assert np.all(waveform_accuracy(bundle, x, y) >= 0.99)

    def test_deterministic_checkpoint(self, tmp_path):
        task = WaveformTask.mla(classes=("BPSK", "QAM16"))
        kw = dict(seed=4, per_class=200, val_per_class=64, epochs=2, min_accuracy=0.0)
        a = train_classifier(task, ChannelFamily("clean", 1), **kw)
        b = train_classifier(task, ChannelFamily("clean", 1), **kw)
        a.save(tmp_path / "a")
        b.save(tmp_path / "b")
        for name in ("classifier_encoder.chnn", "classifier_head.chnn", "classifier.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_accuracy_gate(self):
        task = WaveformTask.mla()
        with pytest.raises(TrainingError):
            train_classifier(task, ChannelFamily("high_snr_train", 1), seed=0, per_class=64, val_per_class=64, epochs=0)

    def test_degrades_at_low_snr(self, mla_classifier):
        task = WaveformTask.mla()
        hi = batch_accuracy(mla_classifier, *make_dataset(task, ChannelFamily("high_snr_train", 5), 512, 1))
        lo = batch_accuracy(mla_classifier, *make_dataset(task, ChannelFamily("low_snr", 5), 512, 1))
        assert lo.mean() <= 0.5 * hi.mean()


class TestBundle:
    def test_save_load(self, mla_classifier, tmp_path):
        mla_classifier.save(tmp_path)
        back = ClassifierBundle.load(tmp_path)
        assert back.checksum() == mla_classifier.checksum()
        assert back.class_names == mla_classifier.class_names
        x = WaveformTask.mla().generate(np.random.default_rng(0), 0, 4)
        np.testing.assert_array_equal(back.softmax(x), mla_classifier.softmax(x))

    def test_inference_does_not_mutate(self, mla_classifier):
        before = mla_classifier.checksum()
        x = WaveformTask.mla().generate(np.random.default_rng(0), 0, 32)
        for _ in range(5):
            classify_batch(mla_classifier, x)
        assert mla_classifier.checksum() == before


class TestTasks:
    def test_sla_devices_differ(self):
        task = WaveformTask.sla()
        assert task.num_classes == 4
        xs = [task.generate(np.random.default_rng(0), k, 2) for k in range(4)]
        assert not np.allclose(xs[0], xs[1])

    def test_round_trip(self):
        t = WaveformTask.sla(64, 2)
        assert WaveformTask.from_dict(t.to_dict()) == t

    def test_channel_family_reproducible(self):
        fam = ChannelFamily("mid_snr", 3)
        a, b = fam.channel(5), fam.channel(5)
        assert a.snr_db == b.snr_db
        assert fam.channel(6).snr_db != a.snr_db

    def test_limited_realizations_cycle(self):
        fam = ChannelFamily("mid_snr", 3, realizations=4)
        assert fam.channel(1).snr_db == fam.channel(5).snr_db

    def test_feedback_fields(self):
        fb = Feedback(0, np.array([0.5, 0.5]), 2)
        assert fb.batch_size == 2
