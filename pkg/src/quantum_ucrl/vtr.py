"""Quantum UCRL-VTR for linear mixture MDPs.

A phase plans optimistically against per-step confidence ellipsoids, then
estimates the expected value features phi_h = E_pi[phi_{V_{h+1}}(s_h, a_h)]
and the targets E_pi[P_h V_{h+1}] with quantum mean estimation. The features
are refined by halving the accuracy target until one of them is large in the
Lambda^{-1} norm; that norm becomes the phase weight w_k. The features enter
a weighted ridge regression with weight 1/w_k^2, which doubles det(Lambda) at
the step attaining w_k, so the number of phases grows only logarithmically.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .mdp import ConfigurationError, LinearMixtureMDP, Policy, occupancy_measure, phi_table
from .oracles import (
    BinaryOracleHandle,
    BudgetExhausted,
    EpisodeLedger,
    NoiseModel,
    ProbabilityOracleHandle,
    mean_estimate,
)
from .records import RegretCache, RunRecord, rows_from_ledger

EPSILON_FLOOR = 2.0 ** -20


@dataclass(eq=False)
class RegressionState:
    """Weighted ridge statistics for one step h.

    Updated in place by :func:`weighted_ridge_update`; the Cholesky factor of
    Lambda is refreshed on every update.
    """

    Lambda: np.ndarray
    rhs: np.ndarray
    theta_bar: np.ndarray
    lam: float
    phis: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    ws: list = field(default_factory=list)
    _chol: tuple = field(default=None, repr=False)

    @classmethod
    def empty(cls, d: int, lam: float = 1.0) -> "RegressionState":
        if lam <= 0:
            raise ConfigurationError("lambda must be positive")
        Lambda = lam * np.eye(d)
        return cls(Lambda, np.zeros(d), np.zeros(d), float(lam), _chol=cho_factor(Lambda, lower=True))

    @property
    def d(self) -> int:
        return self.Lambda.shape[0]

    def solve(self, x: np.ndarray) -> np.ndarray:
        """Lambda^{-1} x for x of shape (d,) or (d, m)."""
        return cho_solve(self._chol, x)

    def inv_norm(self, x: np.ndarray) -> np.ndarray:
        """||x||_{Lambda^{-1}} along the last axis."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.d)
        z = self.solve(flat.T).T
        out = np.sqrt(np.maximum(np.einsum("ij,ij->i", flat, z), 0.0))
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else float(out[0])

    def logdet(self) -> float:
        return 2.0 * float(np.log(np.diag(self._chol[0])).sum())

    def rebuilt_lambda(self) -> np.ndarray:
        """Lambda recomputed from the stored history."""
        out = self.lam * np.eye(self.d)
        for phi, w in zip(self.phis, self.ws):
            out += np.outer(phi, phi) / (w * w)
        return out


def weighted_ridge_update(state: RegressionState, phi_hat, y: float, w: float) -> RegressionState:
    """Add (phi_hat, y) with weight 1/w^2 and re-solve for theta_bar."""
    phi_hat = np.asarray(phi_hat, dtype=float)
    if phi_hat.shape != (state.d,):
        raise ValueError(f"feature must have shape ({state.d},)")
    if not (np.all(np.isfinite(phi_hat)) and math.isfinite(y) and math.isfinite(w)):
        raise ValueError("non-finite regression input")
    if w <= 0:
        raise ValueError("weight w must be positive")
    inv_w2 = 1.0 / (w * w)
    state.Lambda = state.Lambda + np.outer(phi_hat, phi_hat) * inv_w2
    state.rhs = state.rhs + phi_hat * (y * inv_w2)
    state._chol = cho_factor(state.Lambda, lower=True)
    state.theta_bar = cho_solve(state._chol, state.rhs)
    state.phis.append(phi_hat.copy())
    state.ys.append(float(y))
    state.ws.append(float(w))
    return state


@dataclass(frozen=True, eq=False)
class ConfidenceEllipsoid:
    """{theta : ||theta - center||_Lambda <= beta}."""

    state: RegressionState
    beta: float

    @property
    def center(self) -> np.ndarray:
        return self.state.theta_bar

    @property
    def Lambda(self) -> np.ndarray:
        return self.state.Lambda

    def distance(self, theta) -> float:
        diff = np.asarray(theta, dtype=float) - self.center
        return math.sqrt(max(float(diff @ self.Lambda @ diff), 0.0))

    def contains(self, theta) -> bool:
        return self.distance(theta) <= self.beta

    def support(self, phi) -> np.ndarray:
        """max over the ellipsoid of phi^T theta, along the last axis of phi."""
        return np.asarray(phi) @ self.center + self.beta * self.state.inv_norm(phi)


def confidence_radius(k: int, d: int, lam: float = 1.0) -> float:
    return math.sqrt(lam) + 2.0 * math.sqrt(d * k)


def optimistic_planning(psi: np.ndarray, ellipsoids: Sequence[ConfidenceEllipsoid], R: np.ndarray):
    """Backward induction with the per-(s, a) ellipsoid maximum; Q clipped to [0, H].

    Returns (Q, V, greedy Policy).
    """
    R = np.asarray(R, dtype=float)
    H, S, A = R.shape
    Q = np.empty((H, S, A))
    V = np.zeros((H + 1, S))
    greedy = np.empty((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        phi = phi_table(psi, V[h + 1])
        Q[h] = np.clip(R[h] + ellipsoids[h].support(phi), 0.0, H)
        greedy[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h, np.arange(S), greedy[h]]
    return Q, V, Policy.deterministic(greedy, A)


# ------------------------------------------------------------- estimation


@dataclass(frozen=True, eq=False)
class FeatureEstimate:
    phi_hat: np.ndarray  # (H, d)
    w: float
    cost: int
    m: int
    degenerate: bool
    inv_norms: np.ndarray  # (H,) ||phi_hat_h||_{Lambda_h^{-1}}


def _feature_oracles(mdp: LinearMixtureMDP, pi: Policy, V: np.ndarray, h: int):
    tab = mdp.to_tabular()
    p = ProbabilityOracleHandle(occupancy_measure(tab, pi, h).ravel(), tag=("occupancy", h))
    x = BinaryOracleHandle(phi_table(mdp.psi, V[h + 1]).reshape(-1, mdp.d), bound=mdp.H, tag=("feature", h))
    return p, x


def estimate_features(mdp: LinearMixtureMDP, pi: Policy, V: np.ndarray, regs: Sequence[RegressionState],
                      ledger: EpisodeLedger, noise: NoiseModel, delta: float, rng: np.random.Generator, *,
                      c_mean: float = 1.0, epsilon_floor: float = EPSILON_FLOOR, phase: int = 0,
                      policy_id: int = 0) -> FeatureEstimate:
    """Refine every phi_h until some estimate is large relative to its accuracy.

    Iterate m holds estimates with l2 error 2^-m. The loop stops once an
    earlier iterate m-1 has Lambda^{-1}-norm at least 2^{2-m} for some h, or
    when m reaches ceil(log2(1/epsilon_floor)), which flags the phase as
    degenerate.
    """
    H, d = mdp.H, mdp.d
    m_max = math.ceil(math.log2(1.0 / epsilon_floor))
    oracles = [_feature_oracles(mdp, pi, V, h) for h in range(H)]
    iterates = [np.zeros((H, d)), np.zeros((H, d))]
    start = ledger.consumed
    m = 1
    degenerate = False
    while all(regs[h].inv_norm(iterates[m - 1][h]) < 2.0 ** (2 - m) for h in range(H)):
        if m >= m_max:
            degenerate = True
            break
        m += 1
        est = np.empty((H, d))
        for h in range(H):
            p, x = oracles[h]
            rep = mean_estimate(p, x, 2.0 ** -m, delta, noise, ledger, policy_id, rng, c_mean, phase, "feature")
            est[h] = rep.estimate
        iterates.append(est)
    phi_hat = iterates[m]
    norms = np.array([regs[h].inv_norm(phi_hat[h]) for h in range(H)])
    w = float(norms.max())
    if degenerate or w < epsilon_floor:
        degenerate = True
        w = max(w, epsilon_floor)
    return FeatureEstimate(phi_hat, w, ledger.consumed - start, m, degenerate, norms)


def target_values(mdp: LinearMixtureMDP, V: np.ndarray, h: int) -> np.ndarray:
    """(P_h V_{h+1})(s, a) for all (s, a)."""
    return mdp.to_tabular().P[h] @ V[h + 1]


def estimate_targets(mdp: LinearMixtureMDP, pi: Policy, V: np.ndarray, w: float, ledger: EpisodeLedger,
                     noise: NoiseModel, delta: float, rng: np.random.Generator, *, c_mean: float = 1.0,
                     phase: int = 0, policy_id: int = 0) -> tuple[np.ndarray, int]:
    """Scalar mean estimates of E_pi[P_h V_{h+1}] to accuracy w, clamped to [0, H]."""
    if w <= 0:
        raise ValueError("w must be positive")
    tab = mdp.to_tabular()
    H = mdp.H
    start = ledger.consumed
    y = np.empty(H)
    for h in range(H):
        p = ProbabilityOracleHandle(occupancy_measure(tab, pi, h).ravel(), tag=("occupancy", h))
        x = BinaryOracleHandle(target_values(mdp, V, h).reshape(-1, 1), bound=H, tag=("target", h))
        rep = mean_estimate(p, x, w, delta, noise, ledger, policy_id, rng, c_mean, phase, "target")
        y[h] = min(max(float(rep.estimate[0]), 0.0), float(H))
    return y, ledger.consumed - start


def phase_cap(d: int, H: int, T: int, c_K: float = 4.0) -> int:
    return math.ceil(c_K * d * H * math.log(1.0 + T ** 3 / d))


def mean_delta(delta: float, d: int, H: int, T: int, c_K: float = 4.0) -> float:
    """Per-call confidence delta / (4 H K_cap)."""
    return delta / (4 * H * phase_cap(d, H, T, c_K))


def run_quantum_ucrl_vtr(mdp: LinearMixtureMDP, T: int, delta: float = 0.1, *, lam: float = 1.0,
                         c_mean: float = 1.0, c_K: float = 4.0, epsilon_floor: float = EPSILON_FLOOR,
                         noise: NoiseModel | None = None, rng: np.random.Generator | int | None = None,
                         track: bool = False) -> RunRecord:
    """Run Quantum UCRL-VTR until T episodes are consumed.

    With ``track`` the diagnostics hold per-phase checks against ground truth:
    ellipsoid coverage, feature and target errors, determinant ratios and the
    planned optimistic value.
    """
    t0 = time.perf_counter()
    if not isinstance(mdp, LinearMixtureMDP):
        raise ConfigurationError("Quantum UCRL-VTR needs a linear mixture MDP")
    if T < 1:
        raise ConfigurationError("T must be positive")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError("delta must lie in (0, 1)")
    if min(lam, c_mean, c_K, epsilon_floor) <= 0:
        raise ConfigurationError("constants must be positive")
    noise = noise or NoiseModel()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    H, d, S = mdp.H, mdp.d, mdp.S
    tab = mdp.to_tabular()
    s1 = mdp.s1
    dprime = mean_delta(delta, d, H, T, c_K)

    ledger = EpisodeLedger(T)
    regs = [RegressionState.empty(d, lam) for _ in range(H)]
    regret = RegretCache(tab)
    regret_by_policy: dict[int, float] = {}
    per_phase = {name: {} for name in ("w_k", "beta_k", "feature_cost", "target_cost", "det_Lambda_min",
                                       "degenerate_flag")}
    diag = {name: [] for name in ("phase", "beta", "w", "m", "coverage", "feature_error", "target_error",
                                  "target_error_hat", "det_ratio_argmax", "det_ratio_min_other", "planned_v1",
                                  "max_inv_norm_true")}
    k = 0
    degenerate_any = False
    while not ledger.closed:
        k += 1
        beta = math.sqrt(lam) + 2.0 * math.sqrt(d * k)
        ellipsoids = [ConfidenceEllipsoid(r, beta) for r in regs]
        _, V, pi = optimistic_planning(mdp.psi, ellipsoids, mdp.R)
        regret_by_policy[k] = regret(pi)
        per_phase["beta_k"][k] = beta
        per_phase["det_Lambda_min"][k] = min(math.exp(r.logdet()) for r in regs)
        try:
            feat = estimate_features(mdp, pi, V, regs, ledger, noise, dprime, rng, c_mean=c_mean,
                                     epsilon_floor=epsilon_floor, phase=k, policy_id=k)
            per_phase["feature_cost"][k] = feat.cost
            per_phase["w_k"][k] = feat.w
            per_phase["degenerate_flag"][k] = int(feat.degenerate)
            degenerate_any |= feat.degenerate
            y, tcost = estimate_targets(mdp, pi, V, feat.w, ledger, noise, dprime, rng, c_mean=c_mean,
                                        phase=k, policy_id=k)
            per_phase["target_cost"][k] = tcost
        except BudgetExhausted:
            break
        if track:
            phi_true = np.stack([occupancy_measure(tab, pi, h).ravel() @ phi_table(mdp.psi, V[h + 1]).reshape(-1, d)
                                 for h in range(H)])
            truth = np.einsum("hd,hd->h", phi_true, mdp.theta)
            diag["phase"].append(k)
            diag["beta"].append(beta)
            diag["w"].append(feat.w)
            diag["m"].append(feat.m)
            diag["coverage"].append(max(e.distance(mdp.theta[h]) for h, e in enumerate(ellipsoids)))
            diag["feature_error"].append(float(np.linalg.norm(feat.phi_hat - phi_true, axis=1).max()))
            diag["target_error"].append(float(np.abs(y - truth).max()))
            diag["target_error_hat"].append(float(np.abs(y - np.einsum("hd,hd->h", feat.phi_hat, mdp.theta)).max()))
            diag["planned_v1"].append(float(V[0, s1]))
            diag["max_inv_norm_true"].append(float(max(regs[h].inv_norm(phi_true[h]) for h in range(H))))
            before = np.array([r.logdet() for r in regs])
        for h in range(H):
            weighted_ridge_update(regs[h], feat.phi_hat[h], float(y[h]), feat.w)
        if track:
            ratio = np.exp(np.array([r.logdet() for r in regs]) - before)
            hk = int(np.argmax(feat.inv_norms))
            diag["det_ratio_argmax"].append(float(ratio[hk]))
            others = np.delete(ratio, hk)
            diag["det_ratio_min_other"].append(float(others.min()) if others.size else math.inf)

    columns = rows_from_ledger(ledger, regret_by_policy, phase_columns=per_phase)
    phases = int(columns["phase"][-1]) if ledger.consumed else 0
    record = RunRecord(
        algorithm="qucrl-vtr",
        columns=columns,
        summary={
            "episodes": int(ledger.consumed),
            "final_regret": float(columns["cumulative_regret"][-1]) if ledger.consumed else 0.0,
            "phases": phases,
            "completed_phases": len(regs[0].ws),
            "phase_cap": phase_cap(d, H, T, c_K),
            "degenerate": bool(degenerate_any),
            "v_star": regret.v_star,
            "lambda": lam,
            "c_mean": c_mean,
            "terminated_early": bool(ledger.consumed < T),
        },
    )
    record.wall_time = time.perf_counter() - t0
    if track:
        record.diagnostics = {"v_star": regret.v_star, "regressions": regs, "ledger": ledger,
                              **{key: np.array(v) for key, v in diag.items()}}
    return record
