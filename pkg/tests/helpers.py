"""Shared oracles for the test suite."""

import numpy as np

from convboost.convnet import init_network

# Filled by the acceptance tests, printed in the pytest terminal summary.
ACCEPTANCE_LINES = []


def random_small_spec(rng, n_classes):
    """Random conv stack (1 to 3 conv layers) ending in a dense softmax head."""
    spec = []
    for _ in range(int(rng.integers(1, 4))):
        spec.append({"type": "conv", "filters": int(rng.integers(1, 4)), "kernel": int(rng.choice([1, 3])),
                     "padding": str(rng.choice(["valid", "same"]))})
        if rng.random() < 0.7:
            spec.append({"type": "relu"})
    if rng.random() < 0.5:
        spec.append({"type": "pool", "window": 2, "stride": 2, "mode": str(rng.choice(["max", "average"]))})
    if rng.random() < 0.5:
        spec.append({"type": "dropout", "rate": 0.3})
    spec.append({"type": "global_average_pool"} if rng.random() < 0.5 else {"type": "flatten"})
    spec.append({"type": "dense", "units": n_classes, "l2": float(rng.choice([0.0, 1e-2]))})
    spec.append({"type": "softmax"})
    return spec


def random_small_net(seed):
    rng = np.random.default_rng(seed)
    side = int(rng.integers(6, 13))
    shape = (side, side, int(rng.integers(1, 3)))
    n_classes = int(rng.integers(2, 4))
    net = init_network(random_small_spec(rng, n_classes), shape, seed=seed)
    # Non-zero biases so every bias gradient is exercised.
    net.set_parameters({k: v + rng.normal(0, 0.1, v.shape) for k, v in net.parameters().items()})
    x = rng.normal(size=(2,) + shape)
    y = np.eye(n_classes)[rng.integers(0, n_classes, 2)]
    return net, x, y


def gradient_check(net, x, y, delta=1e-5, mask_seed=99):
    """Worst |analytic - central difference| / max(1, |central difference|) over all parameters."""

    def loss_at():
        probs, cache = net.forward(x, training=True, rng=np.random.default_rng(mask_seed))
        return net.loss(probs, y), cache

    _, cache = loss_at()
    analytic = net.backward(cache, y)
    worst = 0.0
    params = {k: v.copy() for k, v in net.parameters().items()}
    for key, base in params.items():
        for idx in np.ndindex(base.shape):
            vals = []
            for sign in (1, -1):
                p = dict(params)
                p[key] = base.copy()
                p[key][idx] += sign * delta
                net.set_parameters(p)
                vals.append(loss_at()[0])
            fd = (vals[0] - vals[1]) / (2 * delta)
            worst = max(worst, abs(analytic[key][idx] - fd) / max(1.0, abs(fd)))
    net.set_parameters(params)
    return worst


def enumerate_best_gain(x, g, h, lam, gamma):
    """Brute force over every (feature, threshold between distinct sorted values) split."""
    best, best_split = -np.inf, None
    n, d = x.shape
    for f in range(d):
        vals = np.unique(x[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            left = x[:, f] <= (a + b) / 2
            gl, hl = g[left].sum(), h[left].sum()
            gr, hr = g[~left].sum(), h[~left].sum()
            gain = 0.5 * (gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - (gl + gr) ** 2 / (hl + hr + lam)) - gamma
            if gain > best:
                best, best_split = gain, (f, a, b)
    return best, best_split
