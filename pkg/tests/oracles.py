"""Independent reference implementations used as test oracles.

Written in plain Python (loops, tuples, integers) without calling into
``eorl`` so that agreement with the package is evidence of correctness.
"""
from __future__ import annotations

import math

import numpy as np


def mlp_forward(layer_sizes, flat_params, x):
    """Loop-based MLP forward pass for one input vector.

    Parameter layout: per layer, the (fan_in x fan_out) weight matrix in
    row-major order, followed by the fan_out biases.  ReLU on hidden layers,
    identity on the output.
    """
    params = [float(p) for p in flat_params]
    h = [float(v) for v in x]
    pos = 0
    n_layers = len(layer_sizes) - 1
    for layer in range(n_layers):
        fan_in, fan_out = layer_sizes[layer], layer_sizes[layer + 1]
        w = params[pos:pos + fan_in * fan_out]
        pos += fan_in * fan_out
        b = params[pos:pos + fan_out]
        pos += fan_out
        out = []
        for j in range(fan_out):
            s = b[j]
            for i in range(fan_in):
                s += h[i] * w[i * fan_out + j]
            out.append(s if layer == n_layers - 1 else max(s, 0.0))
        h = out
    assert pos == len(params)
    return h


def mc_loss(layer_sizes, flat_params, states, actions, returns, weights=None):
    """Mean of w_b * (Q(s_b, a_b) - G_b)^2 via the loop forward pass."""
    total = 0.0
    for b, (s, a, g) in enumerate(zip(states, actions, returns)):
        q = mlp_forward(layer_sizes, flat_params, s)[int(a)]
        w = 1.0 if weights is None else float(weights[b])
        total += w * (q - float(g)) ** 2
    return total / len(states)


def suffix_returns(rewards):
    """G_t = sum_{t' >= t} r_t' by explicit double loop."""
    n = len(rewards)
    return [math.fsum(rewards[t:]) for t in range(n)]


# ---------------------------------------------------------------------------
# brute-force environment simulators: take a whole action sequence, return the
# list of (reward, done, reason) for the steps actually taken.

def simulate_bitflip(m, actions, subgoal=False):
    limit = 5 * m
    penalty = 1.0 / (5 * m)
    state = 0  # bit i of the integer is bit i of the string
    full = (1 << m) - 1
    pattern = sum(1 << i for i in range(m) if i % 2 == 1)
    seen_pattern = False
    out = []
    for t, a in enumerate(actions, start=1):
        state ^= 1 << a
        if subgoal and state == pattern:
            seen_pattern = True
        if state == full:
            r = 10.0 if (not subgoal or seen_pattern) else 1.0
            out.append((r, True, "goal"))
            return out
        if t == limit:
            out.append((-penalty, True, "timeout"))
            return out
        out.append((-penalty, False, None))
    return out


_GRID_DELTA = {0: (0, 1), 1: (0, -1), 2: (-1, 0), 3: (1, 0)}  # up, down, left, right

_GRID_REWARDS = {
    # mode -> {(hit_top_left, hit_bottom_right): terminal reward}
    "0": {(False, False): 10.0, (True, False): 10.0, (False, True): 10.0, (True, True): 10.0},
    "1": {(False, False): 1.0, (True, False): 10.0, (False, True): 1.0, (True, True): 10.0},
    "2+": {(False, False): 1.0, (True, False): 2.0, (False, True): 2.0, (True, True): 10.0},
    "2-": {(False, False): 1.0, (True, False): -1.0, (False, True): -1.0, (True, True): 10.0},
}


def simulate_grid(m, actions, mode="0", limit=None):
    """``actions`` are the effective moves (after any random replacement)."""
    limit = 20 * (m - 1) if limit is None else limit
    penalty = 1.0 / limit
    x, y = 1, 1
    hits = [False, False]
    out = []
    for t, a in enumerate(actions, start=1):
        dx, dy = _GRID_DELTA[a]
        if 1 <= x + dx <= m:
            x += dx
        if 1 <= y + dy <= m:
            y += dy
        if (x, y) == (1, m):
            hits[0] = True
        if (x, y) == (m, 1):
            hits[1] = True
        if (x, y) == (m, m):
            out.append((_GRID_REWARDS[mode][tuple(hits)], True, "goal"))
            return out
        if t == limit:
            out.append((-penalty, True, "timeout"))
            return out
        out.append((-penalty, False, None))
    return out


# ---------------------------------------------------------------------------
# drivers shared by the environment tests and the acceptance suite

def random_bitflip_actions(m, rng):
    """Either uniform random flips or a shuffled direct path, length 5m."""
    if rng.random() < 0.3:
        head = list(rng.permutation(m))
        if rng.random() < 0.5:  # detour through the alternating pattern first
            head = [i for i in range(m) if i % 2 == 1] + [i for i in range(m) if i % 2 == 0]
        return head + list(rng.integers(m, size=5 * m - len(head)))
    return list(rng.integers(m, size=5 * m))


def random_grid_actions(m, rng, limit):
    """Random walk with a random per-sequence direction bias, so corners and goal get hit."""
    bias = rng.dirichlet(np.ones(4))
    return list(rng.choice(4, size=limit, p=bias))


def drive(env, actions, rng=None):
    """Run ``actions`` until done; return [(reward, done, reason)] and effective actions."""
    env.reset()
    out, effective = [], []
    for a in actions:
        res = env.step(int(a), rng)
        effective.append(getattr(env, "last_action", a))
        reason = None if res.done_reason is None else res.done_reason.value
        out.append((res.reward, res.done, reason))
        if res.done:
            break
    return out, effective


# ---------------------------------------------------------------------------
# finite-difference gradient in extended precision

def _unpack(layer_sizes, params):
    layers, pos = [], 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        layers.append((w, params[pos:pos + fan_out]))
        pos += fan_out
    return layers


def preactivations(layer_sizes, params, states):
    """Hidden-layer pre-activations for every state (list of arrays)."""
    h = np.asarray(states, dtype=np.longdouble)
    out = []
    layers = _unpack(layer_sizes, np.asarray(params, dtype=np.longdouble))
    for w, b in layers[:-1]:
        z = h @ w + b
        out.append(z)
        h = np.maximum(z, 0)
    return out


def longdouble_loss(layer_sizes, params, states, actions, returns, weights=None):
    h = np.asarray(states, dtype=np.longdouble)
    layers = _unpack(layer_sizes, params)
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0)
    q = h[np.arange(len(actions)), np.asarray(actions)]
    r = q - np.asarray(returns, dtype=np.longdouble)
    w = np.ones_like(r) if weights is None else np.asarray(weights, dtype=np.longdouble)
    return np.mean(w * r * r)


def finite_difference_gradient(layer_sizes, params, states, actions, returns, weights=None,
                               h=1e-5):
    """Central differences with step h, loss evaluated in long double."""
    base = np.asarray(params, dtype=np.longdouble)
    grad = np.empty(len(base))
    for p in range(len(base)):
        up, down = base.copy(), base.copy()
        up[p] += h
        down[p] -= h
        diff = (longdouble_loss(layer_sizes, up, states, actions, returns, weights)
                - longdouble_loss(layer_sizes, down, states, actions, returns, weights))
        grad[p] = float(diff / (2 * h))
    return grad


def near_kink(layer_sizes, params, states, margin=1e-4):
    """True if any hidden pre-activation lies within ``margin`` of the ReLU kink."""
    return any(np.min(np.abs(z)) < margin for z in preactivations(layer_sizes, params, states))
