"""Deliberately naive reference implementations used as test oracles."""

import math

import numpy as np

GROUP_VALUES = [("race", 6), ("gender", 3), ("age", 5), ("disability", 2), ("skin", 6)]


def naive_flags(r, band=(1.0, 1.5), late=200, risky=0.5):
    if not r.responded:
        return [True, False, False, r.min_distance_m < risky]
    return [False, not (band[0] <= r.response_distance_m <= band[1]),
            r.response_step > late, r.min_distance_m < risky]


def naive_issue_vector(records):
    """Per-group recount by plain loops, then the mean over valid groups.

    Returns (vector, excluded_count) or (None, 22) if no group is valid.
    """
    per_group = []
    excluded = 0
    rows = [(r.identity.indices(), naive_flags(r)) for r in records]
    for attr_pos, (_, size) in enumerate(GROUP_VALUES):
        for value in range(size):
            n_in = n_out = 0
            c_in = [0, 0, 0, 0]
            c_out = [0, 0, 0, 0]
            for idx, flags in rows:
                if idx[attr_pos] == value:
                    n_in += 1
                    c_in = [c + f for c, f in zip(c_in, flags)]
                else:
                    n_out += 1
                    c_out = [c + f for c, f in zip(c_out, flags)]
            if n_in == 0 or n_out == 0:
                excluded += 1
                continue
            per_group.append([abs(a / n_in - b / n_out) for a, b in zip(c_in, c_out)])
    if not per_group:
        return None, excluded
    return [math.fsum(v[j] for v in per_group) / len(per_group) for j in range(4)], excluded


def reward_to_go(rewards, gamma, bootstrap=0.0):
    out = []
    for t in range(len(rewards)):
        g = 0.0
        for k, r in enumerate(rewards[t:]):
            g += gamma ** k * r
        g += gamma ** (len(rewards) - t) * bootstrap
        out.append(g)
    return np.array(out)


def central_difference(f, x, h=1e-6):
    """Numerical gradient of scalar f with respect to array x (modified in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))
