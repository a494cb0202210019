import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairserve import approximator as ax
from fairserve.errors import FormatVersionError, NonFiniteGradient
from oracles import central_difference, rel_error


def random_params(seed, hidden=8):
    rng = np.random.default_rng(seed)
    p = ax.init_params(rng, hidden)
    # non-zero head so every actor tensor receives gradient
    p["a_w2"] = rng.uniform(-0.5, 0.5, p["a_w2"].shape)
    p["a_b2"] = rng.uniform(-0.5, 0.5, 2)
    return p


def random_states(seed, n=6):
    rng = np.random.default_rng(seed)
    x = np.zeros((n, 24))
    for i in range(n):
        x[i, rng.integers(0, 6)] = 1
        x[i, 6 + rng.integers(0, 3)] = 1
        x[i, 9 + rng.integers(0, 5)] = 1
        x[i, 14 + rng.integers(0, 2)] = 1
        x[i, 16 + rng.integers(0, 6)] = 1
    x[:, 22:] = rng.random((n, 2))
    return x


def naive_forward(p, x):
    h = [np.tanh(sum(x[i] * p["a_w1"][i, j] for i in range(24)) + p["a_b1"][j])
         for j in range(p["a_b1"].size)]
    logits = [sum(h[j] * p["a_w2"][j, k] for j in range(len(h))) + p["a_b2"][k]
              for k in range(2)]
    e = [np.exp(v) for v in logits]
    return np.array([v / sum(e) for v in e])


def test_initial_policy_is_uniform():
    p = ax.init_params(np.random.default_rng(0))
    assert np.array_equal(ax.actor_forward(p, random_states(0)), np.full((6, 2), 0.5))


def test_init_bounds_and_determinism():
    a = ax.init_params(np.random.default_rng(1))
    b = ax.init_params(np.random.default_rng(1))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert np.abs(a["a_w1"]).max() <= 1 / np.sqrt(24)
    assert np.abs(a["c_w2"]).max() <= 1 / np.sqrt(32)


def test_forward_matches_naive_arithmetic():
    p = random_params(2)
    x = random_states(2, 1)[0]
    assert ax.actor_forward(p, x)[0] == pytest.approx(naive_forward(p, x), abs=1e-14)


def test_zero_critic_outputs_zero():
    p = {k: np.zeros_like(v) for k, v in random_params(3).items()}
    assert np.array_equal(ax.critic_forward(p, random_states(3)), np.zeros(6))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_softmax_properties(seed, shift):
    logits = np.random.default_rng(seed).normal(0, 5, (4, 2))
    probs = ax.softmax(logits)
    assert probs.sum(axis=1) == pytest.approx(np.ones(4), abs=1e-12)
    assert ax.softmax(logits + shift) == pytest.approx(probs, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_actor_logprob_gradient(seed):
    p = random_params(seed)
    x = random_states(seed + 10)
    actions = np.random.default_rng(seed).integers(0, 2, len(x))

    def loss():
        lp = ax.log_softmax(ax.actor_logits(p, x))
        return float(lp[np.arange(len(x)), actions].sum())

    cache = {}
    probs = ax.actor_forward(p, x, cache)
    grads = ax.actor_backward(p, cache, ax.logprob_grad_logits(probs, actions))
    for k in ax.ACTOR_KEYS:
        assert rel_error(grads[k], central_difference(loss, p[k], 1e-5)) < 1e-4, k


@pytest.mark.parametrize("seed", range(3))
def test_critic_squared_error_gradient(seed):
    p = random_params(seed)
    x = random_states(seed + 20)
    target = np.random.default_rng(seed).normal(size=len(x))

    def loss():
        return float(np.sum((ax.critic_forward(p, x) - target) ** 2))

    cache = {}
    v = ax.critic_forward(p, x, cache)
    grads = ax.critic_backward(p, cache, 2 * (v - target))
    for k in ax.CRITIC_KEYS:
        assert rel_error(grads[k], central_difference(loss, p[k], 1e-5)) < 1e-4, k


def test_zero_upstream_gives_zero_gradient():
    p = random_params(4)
    cache = {}
    ax.actor_forward(p, random_states(4), cache)
    grads = ax.actor_backward(p, cache, np.zeros((6, 2)))
    assert all(not g.any() for g in grads.values())


def test_expected_score_is_zero():
    # sum_a pi(a) * grad log pi(a) = 0
    p = random_params(5)
    x = random_states(5, 1)
    cache = {}
    probs = ax.actor_forward(p, x, cache)
    total = None
    for a in range(2):
        g = ax.actor_backward(p, cache, ax.logprob_grad_logits(probs, [a]))
        g = {k: probs[0, a] * v for k, v in g.items()}
        total = g if total is None else {k: total[k] + g[k] for k in g}
    assert all(np.abs(v).max() < 1e-10 for v in total.values())


def test_sgd_examples():
    p = random_params(6)
    zero = {k: np.zeros_like(v) for k, v in p.items()}
    assert all(np.array_equal(ax.sgd_step(p, zero, 0.1)[k], p[k]) for k in p)
    assert all(not ax.sgd_step(p, p, 1.0)[k].any() for k in p)
    g = {k: np.ones_like(v) for k, v in p.items()}
    once = ax.sgd_step(p, g, 0.5)
    twice = ax.sgd_step(ax.sgd_step(p, g, 0.25), g, 0.25)
    assert all(np.allclose(once[k], twice[k], atol=1e-15) for k in p)


def test_non_finite_gradient_rejected():
    p = random_params(7)
    bad = {"a_b2": np.array([np.nan, 0.0])}
    with pytest.raises(NonFiniteGradient):
        ax.sgd_step(p, bad, 0.1)
    with pytest.raises(NonFiniteGradient):
        ax.Momentum(0.1, 0.9).step(p, bad)


def test_checkpoint_round_trip(tmp_path):
    p = random_params(8, hidden=32)
    ax.save_params(p, tmp_path / "p.txt")
    q = ax.load_params(tmp_path / "p.txt")
    assert all(np.array_equal(p[k], q[k]) for k in p)
    probes = random_states(8, 100)
    assert np.array_equal(ax.actor_forward(p, probes), ax.actor_forward(q, probes))


def test_checkpoint_rejects_other_version(tmp_path):
    (tmp_path / "p.txt").write_text("fairserve-policy v9\n")
    with pytest.raises(FormatVersionError):
        ax.load_params(tmp_path / "p.txt")
