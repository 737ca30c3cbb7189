import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gradient_check, random_net
from wavesynth import nn
from wavesynth.nn import Activation, AdamState, ContractError, Layer, Mlp, adam_step


def linear(w, b=None, act="linear"):
    w = np.asarray(w, dtype=float)
    return Layer(w, np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=float), Activation(act))


class TestForward:
    def test_zero_linear(self):
        net = Mlp([linear(np.zeros((3, 2)))])
        np.testing.assert_array_equal(net.predict([1.0, -2.0]), np.zeros(3))

    def test_identity_relu(self):
        net = Mlp([linear(np.eye(2), act="relu")])
        np.testing.assert_array_equal(net.predict([-1.0, 2.0]), [0.0, 2.0])

    def test_softmax_head_is_distribution(self):
        rng = np.random.default_rng(0)
        net = Mlp.build([5, 8, 4], "tanh", "softmax", rng)
        out = net.predict(rng.normal(size=(10, 5)) * 30)
        assert np.all(out > 0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_dimension_mismatch(self):
        net = Mlp.build([3, 2])
        with pytest.raises(ValueError):
            net.predict(np.zeros(4))

    def test_deterministic(self):
        net = Mlp.build([4, 6, 2], rng=1)
        x = np.arange(4.0)
        np.testing.assert_array_equal(net.predict(x), net.predict(x))

    def test_batch_and_single_agree(self):
        net = Mlp.build([4, 6, 2], rng=2)
        xb = np.random.default_rng(2).normal(size=(3, 4))
        for row, out in zip(xb, net.predict(xb)):
            np.testing.assert_allclose(net.predict(row), out, atol=1e-15)


class TestStructure:
    def test_bad_chain(self):
        with pytest.raises(ValueError):
            Mlp([linear(np.zeros((3, 2))), linear(np.zeros((1, 4)))])

    def test_softmax_only_last(self):
        with pytest.raises(ValueError):
            Mlp([linear(np.zeros((3, 2)), act="softmax"), linear(np.zeros((1, 3)))])

    def test_empty(self):
        with pytest.raises(ValueError):
            Mlp([])

    def test_init_scales(self):
        net = Mlp.build([100, 50, 10], "relu", "linear", 0)
        assert np.max(np.abs(net.layers[0].weight)) <= np.sqrt(6 / 100)
        assert np.max(np.abs(net.layers[1].weight)) <= np.sqrt(6 / 60)
        assert all(np.all(l.bias == 0) for l in net.layers)


class TestBackward:
    def test_linear_layer_weight_gradient(self):
        w = np.array([[1.0, 2.0], [3.0, -1.0]])
        net = Mlp([linear(w)])
        x = np.array([0.5, -2.0])
        g = np.array([1.0, 3.0])
        _, cache = net.forward(x)
        grads, gx = net.backward(cache, g)
        np.testing.assert_array_equal(grads[0], np.outer(g, x))
        np.testing.assert_array_equal(grads[1], g)
        np.testing.assert_array_equal(gx, w.T @ g)

    def test_relu_subgradient_at_zero(self):
        net = Mlp([linear(np.eye(1), act="relu")])
        _, cache = net.forward(np.array([0.0]))
        grads, gx = net.backward(cache, np.array([1.0]))
        assert gx[0] == 0.0
        assert grads[0][0, 0] == 0.0

    def test_stale_cache(self):
        net = Mlp.build([2, 2], rng=0)
        _, cache = net.forward(np.ones(2))
        adam_step(net, [np.ones((2, 2)), np.ones(2)], AdamState.for_net(net))
        with pytest.raises(ContractError):
            net.backward(cache, np.ones(2))

    def test_foreign_cache(self):
        a, b = Mlp.build([2, 2], rng=0), Mlp.build([2, 2], rng=0)
        _, cache = a.forward(np.ones(2))
        with pytest.raises(ContractError):
            b.backward(cache, np.ones(2))

    def test_three_layer_finite_differences(self):
        rng = np.random.default_rng(3)
        net = Mlp.build([4, 7, 5, 3], "tanh", "linear", rng)
        assert gradient_check(net, rng) < 1e-4

    @pytest.mark.parametrize("seed", range(20))
    def test_random_nets_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        net = random_net(rng)
        assert gradient_check(net, rng) < 1e-4


class TestAdam:
    def test_zero_gradients_keep_parameters(self):
        net = Mlp.build([3, 4, 2], rng=0)
        before = nn.to_bytes(net)
        adam_step(net, [np.zeros_like(p) for p in net.parameters()], AdamState.for_net(net, 0.1))
        assert nn.to_bytes(net) == before

    def test_descent_on_square(self):
        net = Mlp([linear([[1.0]])])
        state = AdamState.for_net(net, lr=0.1)
        w = net.layers[0].weight
        adam_step(net, [2 * w.copy(), np.zeros(1)], state)
        assert w[0, 0] < 1.0

    def test_converges_on_scalar_quadratic(self):
        net = Mlp([linear([[1.0]])])
        state = AdamState.for_net(net, lr=0.05)
        w = net.layers[0].weight
        for _ in range(1000):
            adam_step(net, [2 * w.copy(), np.zeros(1)], state)
        assert abs(w[0, 0]) < 1e-3

    def test_bias_correction_first_step(self):
        # After one step every parameter moves by lr * sign(g) (up to eps).
        net = Mlp([linear([[0.0, 0.0]])])
        adam_step(net, [np.array([[3.0, -0.01]]), np.zeros(1)], AdamState.for_net(net, lr=0.2))
        np.testing.assert_allclose(net.layers[0].weight, [[-0.2, 0.2]], rtol=1e-6)

    def test_shape_mismatch(self):
        net = Mlp.build([3, 2], rng=0)
        with pytest.raises(ContractError):
            adam_step(net, [np.zeros((3, 2)), np.zeros(2)], AdamState.for_net(net))
        with pytest.raises(ContractError):
            adam_step(net, [np.zeros((2, 3))], AdamState.for_net(net))

    def test_nonfinite_update_raises(self):
        net = Mlp.build([1, 1], rng=0)
        with pytest.raises(FloatingPointError):
            adam_step(net, [np.full((1, 1), np.nan), np.zeros(1)], AdamState.for_net(net))


class TestSoftUpdate:
    def test_polyak(self):
        a, b = Mlp.build([3, 2], rng=0), Mlp.build([3, 2], rng=1)
        expected = 0.25 * b.layers[0].weight + 0.75 * a.layers[0].weight
        a.soft_update(b, 0.25)
        np.testing.assert_allclose(a.layers[0].weight, expected, atol=1e-15)

    def test_shape_guard(self):
        with pytest.raises(ValueError):
            Mlp.build([3, 2]).soft_update(Mlp.build([3, 3]), 0.5)


class TestCheckpoint:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_bit_exact(self, seed):
        net = random_net(np.random.default_rng(seed))
        back = nn.from_bytes(nn.to_bytes(net))
        assert back.same_shape(net)
        for p, q in zip(net.parameters(), back.parameters()):
            assert p.tobytes() == q.tobytes()

    def test_file_round_trip(self, tmp_path):
        net = Mlp.build([4, 3, 2], "relu", "softmax", 5)
        nn.save(net, tmp_path / "n.chnn")
        assert nn.load(tmp_path / "n.chnn").checksum() == net.checksum()

    def test_header(self):
        data = nn.to_bytes(Mlp.build([4, 3, 2], "tanh", "softmax", 0))
        assert data[:4] == b"CHNN"
        assert np.frombuffer(data[4:12], "<u4").tolist() == [1, 2]
        assert np.frombuffer(data[12:36], "<u4").tolist() == [4, 3, 1, 3, 2, 2]
        assert len(data) == 36 + 8 * (4 * 3 + 3 + 3 * 2 + 2)

    @pytest.mark.parametrize("blob", [b"XXXX" + bytes(8), nn.to_bytes(Mlp.build([2, 2])) + b"\x00"])
    def test_corrupt(self, blob):
        with pytest.raises(ValueError):
            nn.from_bytes(blob)
