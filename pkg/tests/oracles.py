"""Independent reference implementations used by the unit and acceptance tests."""

import numpy as np

from wavesynth import nn


def brute_force_fir(x, h):
    # Double loop straight from the definition, no numpy vectorization.
    x = list(np.asarray(x, dtype=complex))
    h = list(np.asarray(h, dtype=complex))
    out = []
    for n in range(len(x)):
        acc = 0j
        for m in range(len(h)):
            if n - m >= 0:
                acc += h[m] * x[n - m]
        out.append(acc)
    return np.array(out)


def random_net(rng, max_layers=4, max_units=16):
    n_layers = int(rng.integers(1, max_layers + 1))
    sizes = [int(v) for v in rng.integers(1, max_units + 1, n_layers + 1)]
    hidden = rng.choice(["relu", "tanh", "linear"])
    output = rng.choice(["linear", "tanh", "softmax"])
    if output == "softmax":
        sizes[-1] = max(sizes[-1], 2)
    net = nn.Mlp.build(sizes, hidden, output, rng)
    for layer in net.layers:
        # Nonzero biases so ReLU units are not all switched by the same sign pattern.
        layer.bias[...] = rng.normal(0, 0.5, layer.bias.shape)
    return net


def finite_difference_grads(net, x, upstream, delta=1e-5):
    """Central differences of ``sum(upstream * net(x))`` for every parameter and the input."""

    def objective():
        return float(np.sum(upstream * net.predict(x)))

    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + delta
            plus = objective()
            p[idx] = old - delta
            minus = objective()
            p[idx] = old
            g[idx] = (plus - minus) / (2 * delta)
        grads.append(g)
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + delta
        plus = objective()
        x[idx] = old - delta
        minus = objective()
        x[idx] = old
        gx[idx] = (plus - minus) / (2 * delta)
    return grads, gx


def relative_error(a, b, floor=1e-6):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor))) if a.size else 0.0


def gradient_check(net, rng, batch=3, delta=1e-5):
    """Max relative error between backprop and finite differences over all parameters and the input."""
    x = rng.normal(size=(batch, net.input_dim))
    upstream = rng.normal(size=(batch, net.output_dim))
    _, cache = net.forward(x)
    grads, gx = net.backward(cache, upstream)
    fd, fdx = finite_difference_grads(net, x, upstream, delta)
    errs = [relative_error(g, f) for g, f in zip(grads, fd)]
    errs.append(relative_error(gx, fdx))
    return max(errs)


def manual_forward(net, x):
    """Forward pass written out per layer, independent of ``Mlp.forward``."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    for layer in net.layers:
        z = np.einsum("oi,bi->bo", layer.weight, h) + layer.bias
        name = layer.activation.value
        if name == "relu":
            h = np.where(z > 0, z, 0.0)
        elif name == "tanh":
            h = np.tanh(z)
        elif name == "softmax":
            e = np.exp(z - z.max(axis=1, keepdims=True))
            h = e / e.sum(axis=1, keepdims=True)
        else:
            h = z
    return h
