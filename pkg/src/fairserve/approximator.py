"""Small actor-critic networks with hand-written forward and backward passes.

Both networks are one-hidden-layer tanh MLPs over the 24-dim state encoding.
The actor ends in a 2-way softmax (Walk, Respond); the critic in a scalar.
Parameters live in a flat dict of named arrays so optimisers, gradient
checks and checkpoints can treat them uniformly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatVersionError, NonFiniteGradient

STATE_DIM = 24
N_ACTIONS = 2
CHECKPOINT_HEADER = "fairserve-policy"
CHECKPOINT_VERSION = 1

ACTOR_KEYS = ("a_w1", "a_b1", "a_w2", "a_b2")
CRITIC_KEYS = ("c_w1", "c_b1", "c_w2", "c_b2")

Params = dict[str, np.ndarray]


def init_params(rng: np.random.Generator, hidden: int = 32) -> Params:
    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return {
        "a_w1": uniform(STATE_DIM, (STATE_DIM, hidden)),
        "a_b1": uniform(STATE_DIM, (hidden,)),
        # zero head: training starts from the uniform policy
        "a_w2": np.zeros((hidden, N_ACTIONS)),
        "a_b2": np.zeros(N_ACTIONS),
        "c_w1": uniform(STATE_DIM, (STATE_DIM, hidden)),
        "c_b1": uniform(STATE_DIM, (hidden,)),
        "c_w2": uniform(hidden, (hidden, 1)),
        "c_b2": uniform(hidden, (1,)),
    }


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def actor_logits(p: Params, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
    x = np.atleast_2d(x)
    h = np.tanh(x @ p["a_w1"] + p["a_b1"])
    if cache is not None:
        cache.update(x=x, h=h)
    return h @ p["a_w2"] + p["a_b2"]


def actor_forward(p: Params, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
    """Action distribution(s) for one state or a batch, shape (n, 2)."""
    return softmax(actor_logits(p, x, cache))


def critic_forward(p: Params, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
    """State value(s), shape (n,)."""
    x = np.atleast_2d(x)
    h = np.tanh(x @ p["c_w1"] + p["c_b1"])
    if cache is not None:
        cache.update(x=x, h=h)
    return (h @ p["c_w2"] + p["c_b2"])[:, 0]


def actor_backward(p: Params, cache: dict, grad_logits: np.ndarray) -> Params:
    """Parameter gradients given dLoss/dlogits, shape (n, 2)."""
    x, h = cache["x"], cache["h"]
    g = np.atleast_2d(grad_logits)
    dh = (g @ p["a_w2"].T) * (1.0 - h * h)
    return {
        "a_w1": x.T @ dh,
        "a_b1": dh.sum(axis=0),
        "a_w2": h.T @ g,
        "a_b2": g.sum(axis=0),
    }


def critic_backward(p: Params, cache: dict, grad_value: np.ndarray) -> Params:
    """Parameter gradients given dLoss/dvalue, shape (n,)."""
    x, h = cache["x"], cache["h"]
    g = np.asarray(grad_value, dtype=float).reshape(-1, 1)
    dh = (g @ p["c_w2"].T) * (1.0 - h * h)
    return {
        "c_w1": x.T @ dh,
        "c_b1": dh.sum(axis=0),
        "c_w2": h.T @ g,
        "c_b2": g.sum(axis=0),
    }


def logprob_grad_logits(probs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """d log pi(a|x) / d logits = onehot(a) - pi."""
    g = -np.array(probs, dtype=float)
    g[np.arange(len(g)), np.asarray(actions)] += 1.0
    return g


def check_finite(grads: Params) -> None:
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in {k}")


def sgd_step(p: Params, grads: Params, lr: float) -> Params:
    """p - lr * grads for every key in grads; other entries are carried over."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    check_finite(grads)
    out = dict(p)
    for k, g in grads.items():
        out[k] = p[k] - lr * g
    return out


class Momentum:
    """Heavy-ball gradient descent; momentum=0 reduces to sgd_step."""

    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity: Params = {}

    def step(self, p: Params, grads: Params) -> Params:
        if self.momentum == 0.0:
            return sgd_step(p, grads, self.lr)
        check_finite(grads)
        out = dict(p)
        for k, g in grads.items():
            v = self.momentum * self.velocity.get(k, 0.0) + g
            self.velocity[k] = v
            out[k] = p[k] - self.lr * v
        return out


def snapshot(p: Params) -> Params:
    return {k: v.copy() for k, v in p.items()}


def save_params(p: Params, path) -> None:
    hidden = p["a_w1"].shape[1]
    lines = [f"{CHECKPOINT_HEADER} v{CHECKPOINT_VERSION}", f"hidden {hidden}"]
    for k in ACTOR_KEYS + CRITIC_KEYS:
        arr = np.asarray(p[k])
        lines.append(f"param {k} " + " ".join(str(d) for d in arr.shape))
        lines.append(" ".join(format(float(v), ".17g") for v in arr.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> Params:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"{CHECKPOINT_HEADER} v{CHECKPOINT_VERSION}":
        head = lines[0] if lines else "<empty>"
        raise FormatVersionError(f"{path}: unsupported policy header {head!r}")
    out: Params = {}
    i = 2
    while i < len(lines):
        _, key, *shape = lines[i].split()
        values = np.array([float(v) for v in lines[i + 1].split()])
        out[key] = values.reshape(tuple(int(s) for s in shape))
        i += 2
    missing = set(ACTOR_KEYS + CRITIC_KEYS) - set(out)
    if missing:
        raise FormatVersionError(f"{path}: missing parameters {sorted(missing)}")
    return out
