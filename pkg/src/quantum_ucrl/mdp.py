"""Finite episodic MDPs: tabular and linear-mixture models, exact DP, occupancy.

Steps are 0-based throughout: ``h`` ranges over ``range(H)`` and value arrays
carry an extra terminal row ``V[H] == 0``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernels

PROB_TOL = 1e-12
DERIVED_TOL = 1e-10


class ConfigurationError(ValueError):
    """Inputs with inconsistent shapes or invalid parameters."""


class InvalidModelError(ValueError):
    """A model whose transition kernel is not a valid distribution."""


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_rewards(R: np.ndarray, H: int, S: int, A: int) -> None:
    if R.shape != (H, S, A):
        raise ConfigurationError(f"reward tensor has shape {R.shape}, expected {(H, S, A)}")
    if not np.all(np.isfinite(R)) or R.min() < 0.0 or R.max() > 1.0:
        raise ConfigurationError("rewards must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Episodic MDP with P of shape (H, S, A, S) and known rewards R (H, S, A)."""

    P: np.ndarray
    R: np.ndarray
    s1: int = 0

    def __post_init__(self):
        P = _frozen(self.P)
        R = _frozen(self.R)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ConfigurationError(f"transition tensor must be (H, S, A, S), got {P.shape}")
        H, S, A, _ = P.shape
        if min(H, S, A) < 1:
            raise ConfigurationError("H, S and A must be positive")
        if not np.all(np.isfinite(P)) or P.min() < 0.0:
            raise InvalidModelError("transition probabilities must be non-negative")
        if np.abs(P.sum(axis=-1) - 1.0).max() > PROB_TOL:
            raise InvalidModelError("transition rows must sum to 1")
        _check_rewards(R, H, S, A)
        if not 0 <= int(self.s1) < S:
            raise ConfigurationError(f"initial state {self.s1} outside [0, {S})")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "s1", int(self.s1))

    @property
    def H(self) -> int:
        return self.P.shape[0]

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]

    def to_tabular(self) -> "TabularMDP":
        return self


@dataclass(frozen=True, eq=False)
class LinearMixtureMDP:
    """Linear mixture MDP: P_h(s'|s,a) = psi(s,a,s')^T theta_h.

    ``psi`` has shape (S, A, S, d) and ``theta`` shape (H, d). With
    ``check_bounds`` the norm conditions ||theta_h|| <= 1 and
    ||phi_V(s,a)|| <= 1 for all V in [0,1]^S are enforced as well.
    """

    psi: np.ndarray
    theta: np.ndarray
    R: np.ndarray
    s1: int = 0
    check_bounds: bool = True
    _tab: TabularMDP = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        psi = _frozen(self.psi)
        theta = _frozen(self.theta)
        R = _frozen(self.R)
        if psi.ndim != 4 or psi.shape[0] != psi.shape[2]:
            raise ConfigurationError(f"psi must be (S, A, S, d), got {psi.shape}")
        S, A, _, d = psi.shape
        if theta.ndim != 2 or theta.shape[1] != d:
            raise ConfigurationError(f"theta must be (H, {d}), got {theta.shape}")
        H = theta.shape[0]
        if min(H, S, A, d) < 1:
            raise ConfigurationError("H, S, A and d must be positive")
        _check_rewards(R, H, S, A)
        if not 0 <= int(self.s1) < S:
            raise ConfigurationError(f"initial state {self.s1} outside [0, {S})")
        P = np.einsum("sand,hd->hsan", psi, theta)
        if not np.all(np.isfinite(P)):
            raise InvalidModelError("non-finite transition probabilities")
        if np.abs(P.sum(axis=-1) - 1.0).max() > DERIVED_TOL:
            raise InvalidModelError("psi^T theta_h rows must sum to 1")
        if P.min() < -PROB_TOL:
            raise InvalidModelError(f"negative transition probability {P.min():.3e}")
        if self.check_bounds:
            norms = np.linalg.norm(theta, axis=1)
            if norms.max() > 1.0 + PROB_TOL:
                raise InvalidModelError(f"||theta_h||_2 = {norms.max():.6f} exceeds 1")
            worst = max_feature_norm(psi)
            if worst > 1.0 + DERIVED_TOL:
                raise InvalidModelError(f"||phi_V(s,a)||_2 reaches {worst:.6f} > 1 for V in [0,1]")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "s1", int(self.s1))
        object.__setattr__(self, "_tab", TabularMDP(P=_clamp_rows(P), R=R, s1=int(self.s1)))

    @property
    def H(self) -> int:
        return self.theta.shape[0]

    @property
    def S(self) -> int:
        return self.psi.shape[0]

    @property
    def A(self) -> int:
        return self.psi.shape[1]

    @property
    def d(self) -> int:
        return self.psi.shape[3]

    def to_tabular(self) -> TabularMDP:
        return self._tab


MDP = Union[TabularMDP, LinearMixtureMDP]


def max_feature_norm(psi: np.ndarray, n_samples: int = 256, seed: int = 0) -> float:
    """max over (s, a) and V in [0,1]^S of ||phi_V(s, a)||_2.

    The norm is convex in V, so the maximum sits on a vertex of the cube; all
    2^S vertices are enumerated for S <= 12, otherwise a seeded sample is used.
    """
    S = psi.shape[0]
    if S <= 12:
        verts = np.array(list(itertools.product((0.0, 1.0), repeat=S)))
    else:
        rng = np.random.default_rng(seed)
        verts = rng.integers(0, 2, size=(n_samples, S)).astype(float)
        verts[0] = 1.0
    phis = np.einsum("sand,vn->vsad", psi, verts)
    return float(np.linalg.norm(phis, axis=-1).max())


@dataclass(frozen=True, eq=False)
class Policy:
    """Per-step action distributions, ``probs`` of shape (H, S, A)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 3:
            raise ConfigurationError(f"policy must be (H, S, A), got {probs.shape}")
        if probs.min() < 0.0 or np.abs(probs.sum(axis=-1) - 1.0).max() > PROB_TOL:
            raise ConfigurationError("policy rows must be probability distributions")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def deterministic(cls, actions, A: int) -> "Policy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros(actions.shape + (A,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs)

    @classmethod
    def uniform(cls, H: int, S: int, A: int) -> "Policy":
        return cls(np.full((H, S, A), 1.0 / A))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.probs.shape

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    def action(self, h: int, s: int) -> int:
        """Greedy action; the unique action for deterministic policies."""
        return int(np.argmax(self.probs[h, s]))

    def key(self) -> bytes:
        return self.probs.tobytes()


@dataclass(frozen=True, eq=False)
class ValueTable:
    V: np.ndarray  # (H + 1, S), V[H] == 0
    Q: np.ndarray  # (H, S, A)


def as_tabular(mdp: MDP) -> TabularMDP:
    return mdp.to_tabular()


def _check_policy(mdp: TabularMDP, pi: Policy) -> None:
    if pi.shape != (mdp.H, mdp.S, mdp.A):
        raise ConfigurationError(f"policy shape {pi.shape} does not match MDP {(mdp.H, mdp.S, mdp.A)}")


def exact_policy_evaluation(mdp: MDP, pi: Policy) -> ValueTable:
    tab = as_tabular(mdp)
    _check_policy(tab, pi)
    Q, V = kernels.evaluate_policy(tab.P, tab.R, pi.probs)
    return ValueTable(V=V, Q=Q)


def exact_optimal_values(mdp: MDP) -> tuple[ValueTable, Policy]:
    tab = as_tabular(mdp)
    Q, V, greedy = kernels.backward_induction(tab.P, tab.R, None, np.inf)
    return ValueTable(V=V, Q=Q), Policy.deterministic(greedy, tab.A)


def state_occupancies(mdp: MDP, pi: Policy) -> np.ndarray:
    """Forward recursion d_h(s) for h = 0..H (row H is the post-terminal law)."""
    tab = as_tabular(mdp)
    _check_policy(tab, pi)
    d = np.zeros((tab.H + 1, tab.S))
    d[0, tab.s1] = 1.0
    for h in range(tab.H):
        sa = d[h][:, None] * pi.probs[h]
        d[h + 1] = np.einsum("sa,sat->t", sa, tab.P[h])
    return d


def occupancy_measure(mdp: MDP, pi: Policy, h: int) -> np.ndarray:
    """Exact law of (s_h, a_h) under ``pi``, shape (S, A)."""
    tab = as_tabular(mdp)
    if not 0 <= h < tab.H:
        raise ValueError(f"step {h} outside [0, {tab.H})")
    d = state_occupancies(tab, pi)
    return d[h][:, None] * pi.probs[h]


def compute_phi_V(mdp: LinearMixtureMDP, V: np.ndarray, s: int, a: int) -> np.ndarray:
    """phi_V(s, a) = sum_{s'} psi(s, a, s') V(s')."""
    V = np.asarray(V, dtype=float)
    if V.shape != (mdp.S,):
        raise ConfigurationError(f"value vector must have {mdp.S} entries")
    return mdp.psi[s, a].T @ V


def phi_table(psi: np.ndarray, V: np.ndarray) -> np.ndarray:
    """phi_V for every (s, a) at once, shape (S, A, d)."""
    return np.einsum("sand,n->sad", psi, V)


def _clamp_rows(P: np.ndarray) -> np.ndarray:
    if P.min() < -1e-9:
        raise InvalidModelError(f"transition entry {P.min():.3e} below -1e-9")
    fix = (P.min(axis=-1) < 0.0) | (np.abs(P.sum(axis=-1) - 1.0) > 0.5 * PROB_TOL)
    if not fix.any():
        return P
    P = P.copy()
    rows = np.maximum(P[fix], 0.0)
    P[fix] = rows / rows.sum(axis=-1, keepdims=True)
    return P


def linear_mixture_to_tabular(mdp: LinearMixtureMDP) -> TabularMDP:
    """Materialize P_h(s'|s,a) = psi(s,a,s')^T theta_h, clamping round-off negatives."""
    P = np.einsum("sand,hd->hsan", mdp.psi, mdp.theta)
    return TabularMDP(P=_clamp_rows(P), R=mdp.R, s1=mdp.s1)


def bellman_residual(mdp: MDP, values: ValueTable) -> float:
    """max_h ||Q_h - (R_h + P_h V_{h+1})||_inf."""
    tab = as_tabular(mdp)
    backup = tab.R + np.einsum("hsat,ht->hsa", tab.P, values.V[1:])
    return float(np.abs(values.Q - backup).max())


def value_decomposition_residual(mdp: MDP, pi: Policy, pi_hat: Policy, Q_hat) -> float:
    """|LHS - RHS| of the value-difference identity for arbitrary Q_hat.

    LHS = V_hat_1(s1) - V^pi_1(s1) with V_hat_h(s) = <Q_hat_h(s, .), pi_hat_h(.|s)>.
    RHS = sum_h E_pi <Q_hat_h(s_h, .), pi_hat_h - pi_h>
        + sum_h E_pi [Q_hat_h - R_h - P_h V_hat_{h+1}](s_h, a_h).
    """
    tab = as_tabular(mdp)
    _check_policy(tab, pi)
    _check_policy(tab, pi_hat)
    Q_hat = np.asarray(Q_hat.Q if isinstance(Q_hat, ValueTable) else Q_hat, dtype=float)
    if Q_hat.shape != (tab.H, tab.S, tab.A):
        raise ConfigurationError("Q_hat shape mismatch")
    V_hat = np.zeros((tab.H + 1, tab.S))
    V_hat[: tab.H] = np.sum(Q_hat * pi_hat.probs, axis=-1)
    lhs = V_hat[0, tab.s1] - exact_policy_evaluation(tab, pi).V[0, tab.s1]

    d = state_occupancies(tab, pi)
    rhs = 0.0
    for h in range(tab.H):
        policy_gap = np.sum(Q_hat[h] * (pi_hat.probs[h] - pi.probs[h]), axis=1)
        rhs += d[h] @ policy_gap
        model_gap = Q_hat[h] - tab.R[h] - tab.P[h] @ V_hat[h + 1]
        rhs += np.sum(d[h][:, None] * pi.probs[h] * model_gap)
    return float(abs(lhs - rhs))
