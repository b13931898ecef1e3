"""Classical-sampling comparators sharing the planning backups of the quantum algorithms.

Both baselines see the environment only through full classical rollouts.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .mdp import MDP, ConfigurationError, LinearMixtureMDP, Policy, as_tabular
from .oracles import EpisodeLedger
from .records import RegretCache, RunRecord, rows_from_ledger
from .tabular import log_term, optimistic_value_iteration


@dataclass
class ClassicalCounters:
    n: np.ndarray  # (H, S, A)
    counts: np.ndarray  # (H, S, A, S) transition tallies
    P_hat: np.ndarray  # (H, S, A, S) empirical rows, uniform where n = 0

    @classmethod
    def empty(cls, H: int, S: int, A: int) -> "ClassicalCounters":
        return cls(np.zeros((H, S, A), dtype=np.int64), np.zeros((H, S, A, S), dtype=np.int64),
                   np.full((H, S, A, S), 1.0 / S))

    def observe(self, states: np.ndarray, actions: np.ndarray) -> None:
        for h in range(actions.shape[0]):
            s, a, s_next = states[h], actions[h], states[h + 1]
            self.n[h, s, a] += 1
            self.counts[h, s, a, s_next] += 1
            self.P_hat[h, s, a] = self.counts[h, s, a] / self.n[h, s, a]


def hoeffding_bonus(n, S: int, H: int, L: float, c: float = 1.0):
    """c H sqrt(S L / max(1, n))."""
    return c * H * np.sqrt(S * L / np.maximum(np.asarray(n, dtype=float), 1.0))


def _rollout_one(tab, pi: Policy, rng: np.random.Generator):
    states, actions = kernels.rollout(tab.P, pi.probs, tab.s1, rng.random((1, 2 * tab.H)))
    return states[0], actions[0]


def run_classical_ucrl(mdp: MDP, T: int, delta: float = 0.1, *, c: float = 1.0,
                       rng: np.random.Generator | int | None = None) -> RunRecord:
    """UCRL2-style baseline: one rollout per episode, replan after every episode."""
    t0 = time.perf_counter()
    tab = as_tabular(mdp)
    H, S, A = tab.H, tab.S, tab.A
    if T < 1:
        raise ConfigurationError("T must be positive")
    if c <= 0:
        raise ConfigurationError("constants must be positive")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    L = log_term(S, A, H, T, delta)
    ledger = EpisodeLedger(T)
    counters = ClassicalCounters.empty(H, S, A)
    regret = RegretCache(tab)
    regret_by_policy: dict[int, float] = {}
    pi = Policy.uniform(H, S, A)
    for t in range(1, T + 1):
        regret_by_policy[t] = regret(pi)
        ledger.charge(t, 1, "rollout", t)
        states, actions = _rollout_one(tab, pi, rng)
        counters.observe(states, actions)
        pi = optimistic_value_iteration(counters.P_hat, tab.R, hoeffding_bonus(counters.n, S, H, L, c)).policy
    return _finish("classical-ucrl", ledger, regret_by_policy, regret, t0, {"c": c, "L": L})


def run_classical_ucrl_vtr(mdp: LinearMixtureMDP, T: int, delta: float = 0.1, *, c_beta: float = 1.0,
                           lam: float = 1.0, rng: np.random.Generator | int | None = None) -> RunRecord:
    """UCRL-VTR-style baseline with unweighted ridge on realized next-state values.

    The confidence radius is beta_t = c_beta sqrt(d log(1 + t H^2 / lam) + log(1/delta)) + sqrt(lam).
    """
    from .vtr import ConfidenceEllipsoid, RegressionState, optimistic_planning, weighted_ridge_update

    t0 = time.perf_counter()
    if not isinstance(mdp, LinearMixtureMDP):
        raise ConfigurationError("classical VTR needs a linear mixture MDP")
    if T < 1:
        raise ConfigurationError("T must be positive")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    tab = mdp.to_tabular()
    H, d = mdp.H, mdp.d
    ledger = EpisodeLedger(T)
    regs = [RegressionState.empty(d, lam) for _ in range(H)]
    regret = RegretCache(tab)
    regret_by_policy: dict[int, float] = {}
    pi = Policy.uniform(H, mdp.S, mdp.A)
    V = np.zeros((H + 1, mdp.S))
    for t in range(1, T + 1):
        regret_by_policy[t] = regret(pi)
        ledger.charge(t, 1, "rollout", t)
        states, actions = _rollout_one(tab, pi, rng)
        for h in range(H):
            phi = mdp.psi[states[h], actions[h]].T @ V[h + 1]
            regs[h] = weighted_ridge_update(regs[h], phi, V[h + 1, states[h + 1]], 1.0)
        beta = c_beta * math.sqrt(d * math.log(1.0 + t * H * H / lam) + math.log(1.0 / delta)) + math.sqrt(lam)
        _, V, pi = optimistic_planning(mdp.psi, [ConfidenceEllipsoid(r, beta) for r in regs], mdp.R)
    return _finish("classical-vtr", ledger, regret_by_policy, regret, t0, {"c_beta": c_beta, "lambda": lam})


def _finish(name, ledger, regret_by_policy, regret, t0, extra) -> RunRecord:
    columns = rows_from_ledger(ledger, regret_by_policy)
    record = RunRecord(
        algorithm=name,
        columns=columns,
        summary={
            "episodes": int(ledger.consumed),
            "final_regret": float(columns["cumulative_regret"][-1]) if ledger.consumed else 0.0,
            "phases": int(ledger.consumed),
            "v_star": regret.v_star,
            **extra,
        },
    )
    record.wall_time = time.perf_counter() - t0
    return record
