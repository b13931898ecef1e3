"""Pure-Python (numpy) fallback for the hot kernels.

Must stay call-compatible with ``_kernels.pyx``. Categorical sampling uses the
same sequential cumulative sums as the compiled version so that both backends
draw identical samples from identical uniforms.
"""
from __future__ import annotations

import numpy as np


def backward_induction(P, R, bonus, cap):
    """Q_h = min(R_h + P_h V_{h+1} + b_h, cap); V_h = max_a Q_h; lowest-index argmax."""
    H, S, A = R.shape
    Q = np.empty((H, S, A))
    V = np.zeros((H + 1, S))
    greedy = np.empty((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        q = R[h] + P[h] @ V[h + 1]
        if bonus is not None:
            q = q + bonus[h]
        np.minimum(q, cap, out=q)
        Q[h] = q
        greedy[h] = np.argmax(q, axis=1)
        V[h] = q[np.arange(S), greedy[h]]
    return Q, V, greedy


def evaluate_policy(P, R, pi):
    """Backward induction for a fixed stochastic policy ``pi`` of shape (H, S, A)."""
    H, S, A = R.shape
    Q = np.empty((H, S, A))
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        Q[h] = R[h] + P[h] @ V[h + 1]
        V[h] = np.sum(Q[h] * pi[h], axis=1)
    return Q, V


def _categorical(p, u):
    # first index with u < cumsum(p); falls back to the last positive-mass index
    hit = u[:, None] < np.cumsum(p, axis=1)
    idx = np.argmax(hit, axis=1)
    miss = ~hit.any(axis=1)
    for r in np.flatnonzero(miss):
        nz = np.flatnonzero(p[r] > 0)
        idx[r] = nz[-1] if nz.size else p.shape[1] - 1
    return idx


def rollout(P, pi, s1, u):
    """Forward-sample ``n`` trajectories of ``u.shape[1] // 2`` steps.

    ``u[:, 2h]`` drives the action draw at step h and ``u[:, 2h + 1]`` the
    transition draw. Returns states (n, steps + 1) and actions (n, steps).
    """
    n, two_steps = u.shape
    steps = two_steps // 2
    states = np.empty((n, steps + 1), dtype=np.int64)
    actions = np.empty((n, steps), dtype=np.int64)
    states[:, 0] = s1
    for h in range(steps):
        s = states[:, h]
        a = _categorical(pi[h, s], u[:, 2 * h])
        actions[:, h] = a
        states[:, h + 1] = _categorical(P[h, s, a], u[:, 2 * h + 1])
    return states, actions
