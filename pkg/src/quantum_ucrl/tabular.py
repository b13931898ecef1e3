"""Quantum UCRL for episodic tabular MDPs.

Each phase runs the current policy for H episodes, one per step h, and turns
each episode into one quantum sample of P_h(.|s_h, a_h). Estimates of a
transition row are rebuilt only when its visit count hits a power of two.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .mdp import MDP, ConfigurationError, Policy, as_tabular
from .oracles import (
    BudgetExhausted,
    EpisodeLedger,
    NoiseModel,
    ProbabilityOracleHandle,
    amplitude_estimate,
    csqa_sample,
)
from .records import RegretCache, RunRecord, rows_from_ledger


def log_term(S: int, A: int, H: int, T: int, delta: float) -> float:
    """L = log(S^2 A H log T / delta), with log T floored at 1."""
    return math.log(S * S * A * H * max(math.log(T), 1.0) / delta)


def estimate_delta(S: int, A: int, H: int, T: int, delta: float) -> float:
    """Per-call confidence for amplitude estimation: delta / (2 S A H log2 T)."""
    return delta / (2 * S * A * H * max(math.log2(T), 1.0))


def consistent_c_amp(S: int, A: int, H: int, T: int, delta: float, c1: float = 1.0) -> float:
    """Largest c_amp for which the estimator radius never exceeds min(2 c1 S L / n, 2).

    Between rebuilds n can reach 4x the samples used (the buffer restarts at
    each power of two), so the radius c_amp S log(S/delta') / n_used must stay
    under 2 c1 S L / n with n < 4 n_used.
    """
    L = log_term(S, A, H, T, delta)
    return c1 * L / (2.0 * math.log(S / estimate_delta(S, A, H, T, delta)))


def bonus(n, S: int, H: int, L: float, c1: float = 1.0):
    """min(2 c1 H S L / max(1, n), 2H); accepts scalars or count arrays."""
    if np.ndim(n) == 0:
        return min(2.0 * c1 * H * S * L / max(1, n), 2.0 * H)
    n = np.maximum(np.asarray(n, dtype=float), 1.0)
    return np.minimum(2.0 * c1 * H * S * L / n, 2.0 * H)


@dataclass
class CounterState:
    n: np.ndarray  # (H, S, A) visit counts
    l: np.ndarray  # (H, S, A) doubling tags
    D: dict[tuple[int, int, int], list[int]] = field(default_factory=dict)
    total_updates: int = 0

    @classmethod
    def empty(cls, H: int, S: int, A: int) -> "CounterState":
        return cls(np.zeros((H, S, A), dtype=np.int64), np.zeros((H, S, A), dtype=np.int64))

    def buffered(self, h: int, s: int, a: int) -> int:
        return len(self.D.get((h, s, a), ()))


@dataclass
class ModelEstimate:
    P_hat: np.ndarray  # (H, S, A, S)
    n_used: np.ndarray  # (H, S, A)
    last_epsilon: np.ndarray  # (H, S, A); inf where never estimated

    @classmethod
    def uniform(cls, H: int, S: int, A: int) -> "ModelEstimate":
        return cls(np.full((H, S, A, S), 1.0 / S), np.zeros((H, S, A), dtype=np.int64), np.full((H, S, A), np.inf))


@dataclass(frozen=True, eq=False)
class OptimisticValues:
    Q: np.ndarray
    V: np.ndarray
    b: np.ndarray
    policy: Policy


class Reestimation(NamedTuple):
    phase: int
    h: int
    s: int
    a: int
    n: int
    n_used: int
    epsilon: float
    failed: bool


def optimistic_value_iteration(model, R, bonus_table) -> OptimisticValues:
    """Q_h = min(R_h + P_hat_h V_{h+1} + b_h, H), greedy with lowest-index ties."""
    P_hat = model.P_hat if isinstance(model, ModelEstimate) else np.asarray(model, dtype=float)
    R = np.asarray(R, dtype=float)
    b = np.asarray(bonus_table, dtype=float)
    H = R.shape[0]
    Q, V, greedy = kernels.backward_induction(P_hat, R, b, float(H))
    return OptimisticValues(Q, V, b, Policy.deterministic(greedy, R.shape[2]))


def phase_step(state: CounterState, model: ModelEstimate, pi: Policy, ledger: EpisodeLedger, mdp: MDP,
               noise: NoiseModel, rng: np.random.Generator, *, phase: int = 0, policy_id: int = 0,
               delta_est: float = 0.01, c_amp: float = 1.0, updates_log: list | None = None,
               episode_updates: list | None = None) -> list[tuple[int, int, int]]:
    """One phase: an episode per step h, each adding one quantum sample.

    Mutates ``state`` and ``model`` in place and returns the visited (h, s, a).
    Raises BudgetExhausted when the ledger closes mid-phase.
    """
    tab = as_tabular(mdp)
    visited = []
    for h in range(tab.H):
        s = csqa_sample(tab, pi, h, ledger, rng, policy_id, phase)
        row = pi.probs[h, s]
        a = int(np.argmax(row)) if pi.is_deterministic else int(rng.choice(row.shape[0], p=row))
        key = (h, s, a)
        state.D.setdefault(key, []).append(ledger.consumed)
        state.n[key] += 1
        n = int(state.n[key])
        if n == 1 << int(state.l[key]):
            buf = state.D.pop(key)
            oracle = ProbabilityOracleHandle(tab.P[key], tag=key)
            rep = amplitude_estimate(oracle, len(buf), delta_est, noise, rng, c_amp)
            model.P_hat[key] = rep.estimate
            model.n_used[key] = len(buf)
            model.last_epsilon[key] = rep.epsilon
            state.l[key] += 1
            state.total_updates += 1
            if updates_log is not None:
                updates_log.append(Reestimation(phase, h, s, a, n, len(buf), rep.epsilon, rep.failed))
        if episode_updates is not None:
            episode_updates.append(state.total_updates)
        visited.append(key)
    return visited


def run_quantum_ucrl(mdp: MDP, T: int, delta: float = 0.1, *, c1: float = 1.0, c_amp: float | None = None,
                     noise: NoiseModel | None = None, rng: np.random.Generator | int | None = None,
                     track: bool = False) -> RunRecord:
    """Run Quantum UCRL for T episodes.

    ``c_amp=None`` picks :func:`consistent_c_amp`, so the estimator radius stays
    inside the bonus-calibrated bound. With ``track`` the record's diagnostics
    hold every re-estimation event plus per-phase optimism and radius checks.
    """
    t0 = time.perf_counter()
    tab = as_tabular(mdp)
    H, S, A = tab.H, tab.S, tab.A
    if T < H:
        raise ConfigurationError(f"T={T} must be at least H={H}")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError("delta must lie in (0, 1)")
    if c1 <= 0 or (c_amp is not None and c_amp <= 0):
        raise ConfigurationError("constants must be positive")
    noise = noise or NoiseModel()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if c_amp is None:
        c_amp = consistent_c_amp(S, A, H, T, delta, c1)
    L = log_term(S, A, H, T, delta)
    delta_est = estimate_delta(S, A, H, T, delta)

    ledger = EpisodeLedger(T)
    state = CounterState.empty(H, S, A)
    model = ModelEstimate.uniform(H, S, A)
    regret = RegretCache(tab)
    pi = Policy.uniform(H, S, A)
    planned_v1 = math.nan
    regret_by_policy: dict[int, float] = {}
    episode_updates: list[int] = []
    updates_log: list[Reestimation] | None = [] if track else None
    phase_diag = {"phase": [], "planned_v1": [], "radius_violation": []}

    K = math.ceil(T / H)
    phases_run = 0
    for k in range(1, K + 1):
        regret_by_policy[k] = regret(pi)
        if track:
            phase_diag["phase"].append(k)
            phase_diag["planned_v1"].append(planned_v1)
            phase_diag["radius_violation"].append(_radius_violation(tab.P, model, state.n, S, L, c1))
        phases_run = k
        try:
            phase_step(state, model, pi, ledger, tab, noise, rng, phase=k, policy_id=k, delta_est=delta_est,
                       c_amp=c_amp, updates_log=updates_log, episode_updates=episode_updates)
        except BudgetExhausted:
            break
        values = optimistic_value_iteration(model, tab.R, bonus(state.n, S, H, L, c1))
        pi = values.policy
        planned_v1 = float(values.V[0, tab.s1])

    columns = rows_from_ledger(ledger, regret_by_policy,
                               episode_columns={"updates_so_far": np.array(episode_updates, dtype=np.int64)})
    record = RunRecord(
        algorithm="qucrl",
        columns=columns,
        summary={
            "episodes": int(ledger.consumed),
            "final_regret": float(columns["cumulative_regret"][-1]) if ledger.consumed else 0.0,
            "phases": phases_run,
            "updates": int(state.total_updates),
            "v_star": regret.v_star,
            "L": L,
            "c1": c1,
            "c_amp": c_amp,
            "terminated_early": bool(ledger.consumed < T),
        },
    )
    record.wall_time = time.perf_counter() - t0
    if track:
        record.diagnostics = {
            "reestimations": updates_log,
            "final_counts": state.n.copy(),
            "final_tags": state.l.copy(),
            "final_radius_violation": _radius_violation(tab.P, model, state.n, S, L, c1),
            "v_star": regret.v_star,
            "ledger": ledger,
            **{key: np.array(v) for key, v in phase_diag.items()},
        }
    return record


def _radius_violation(P: np.ndarray, model: ModelEstimate, n: np.ndarray, S: int, L: float, c1: float) -> float:
    """max over estimated rows of ||P_hat - P||_1 - min(2 c1 S L / n, 2); <= 0 means no violation."""
    est = model.n_used > 0
    if not est.any():
        return -math.inf
    err = np.abs(model.P_hat - P).sum(axis=-1)[est]
    bound = np.minimum(2.0 * c1 * S * L / n[est], 2.0)
    return float(np.max(err - bound))
