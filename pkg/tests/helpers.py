import numpy as np

from fewtag.losses import episode_loss
from fewtag.net import init_params


def tiny_params(dim_in=6, n_ways=3, seed=0, hidden1=8, hidden2=5, dtype=np.float64):
    return init_params(dim_in, n_ways, seed, hidden1, hidden2, dtype=dtype)


def param_tensors(params):
    return {name: getattr(params, name) for name in ("w1", "b1", "w2", "b2", "margins")}


def episode_loss_fd_check(params, protos, vecs, slots, cfg, k, h=1e-5, rel_tol=1e-4):
    """Central-difference check of every parameter gradient of episode_loss.

    Works on float64 params with dropout off. Returns the max relative error.
    """
    _, grads = episode_loss(params, protos, vecs, slots, cfg, neg_per_class=k)
    analytic = {
        "w1": grads.w1, "b1": grads.b1, "w2": grads.w2, "b2": grads.b2,
        "margins": grads.margins,
    }
    worst = 0.0
    for name, tensor in param_tensors(params).items():
        flat = tensor.ravel()
        g_flat = np.asarray(analytic[name]).ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up, _ = episode_loss(params, protos, vecs, slots, cfg, neg_per_class=k)
            flat[idx] = orig - h
            down, _ = episode_loss(params, protos, vecs, slots, cfg, neg_per_class=k)
            flat[idx] = orig
            fd = (up - down) / (2 * h)
            # (up - down) carries ~eps*|loss| rounding noise, so fd is only
            # trustworthy to ~eps*|loss|/2h; floor the denominator accordingly
            denom = max(abs(fd), abs(g_flat[idx]), 1e-6)
            worst = max(worst, abs(fd - g_flat[idx]) / denom)
    assert worst <= rel_tol, f"max relative gradient error {worst:.3e} in {name}"
    return worst


def random_toy_episode(rng, n_ways=3, dim=6, max_tokens=10):
    """Random episode tensors with at least 2 tokens per way (so distances
    stay away from 0) plus a few O tokens."""
    n_extra = int(rng.integers(0, max_tokens - 2 * n_ways + 1))
    slots = np.concatenate([np.repeat(np.arange(n_ways), 2), np.full(n_extra, -1)])
    rng.shuffle(slots)
    vecs = rng.normal(0.0, 1.0, size=(slots.size, dim))
    return vecs, slots
