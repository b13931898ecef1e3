"""Contract-level simulation of the quantum query model.

Estimation subroutines are simulated by their guarantees: an error radius, a
query cost and a failure probability. Ground-truth distributions live inside
oracle handles and are only read here.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .mdp import MDP, Policy, as_tabular

NOISE_MODES = ("zero", "uniform", "boundary")


class BudgetExhausted(Exception):
    """The episode budget ran out; the run must stop."""

    def __init__(self, charged: int = 0):
        super().__init__(f"episode budget exhausted ({charged} episodes charged before stopping)")
        self.charged = charged


@dataclass(frozen=True)
class NoiseModel:
    """How simulated estimates deviate from the truth.

    ``zero`` returns the truth, ``uniform`` draws the error magnitude uniformly
    in [0, epsilon] and ``boundary`` uses exactly epsilon. The direction is a
    random draw; the estimate is then pulled back along that ray into the
    valid set (simplex or C-ball). With ``failure_injection`` each call fails
    with probability delta and returns a uniformly random valid output.
    """

    mode: str = "uniform"
    failure_injection: bool = False

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"noise mode must be one of {NOISE_MODES}, got {self.mode!r}")

    def magnitude(self, epsilon: float, rng: np.random.Generator) -> float:
        if self.mode == "zero":
            return 0.0
        if self.mode == "uniform":
            return epsilon * rng.random()
        return epsilon


class ProbabilityOracleHandle:
    """Stands in for U_p: |0> -> sum sqrt(p(w)) |w>. Only measurement is public."""

    __slots__ = ("_p", "tag")

    def __init__(self, p, tag=None):
        p = np.array(p, dtype=float)
        if p.ndim != 1 or p.min() < 0 or abs(p.sum() - 1.0) > 1e-10:
            raise ValueError("probability oracle needs a valid distribution")
        p.setflags(write=False)
        self._p = p
        self.tag = tag

    @property
    def size(self) -> int:
        return self._p.shape[0]

    def measure(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.size, p=self._p))


class BinaryOracleHandle:
    """Stands in for U_X: |w>|0> -> |w>|X(w)>, with ||X(w)||_2 <= bound."""

    __slots__ = ("_values", "bound", "tag")

    def __init__(self, values, bound: float, tag=None):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        norms = np.linalg.norm(values, axis=1)
        if norms.size and norms.max() > bound * (1 + 1e-12) + 1e-12:
            raise ValueError(f"binary oracle value norm {norms.max():.6g} exceeds declared bound {bound}")
        values.setflags(write=False)
        self._values = values
        self.bound = float(bound)
        self.tag = tag

    @property
    def dim(self) -> int:
        return self._values.shape[1]

    def __call__(self, outcome: int) -> np.ndarray:
        return self._values[outcome]


@dataclass(frozen=True, eq=False)
class EstimateReport:
    estimate: np.ndarray | float
    epsilon: float
    delta: float
    failed: bool
    cost: int
    norm: str  # "l1" (amplitude estimation) or "l2" (mean estimation)


class Charge(NamedTuple):
    phase: int
    policy_id: int
    episodes: int
    purpose: str


class EpisodeLedger:
    """Append-only account of episodes consumed, attributed to policies."""

    def __init__(self, total_budget: int):
        if total_budget < 0:
            raise ValueError("budget must be non-negative")
        self.total_budget = int(total_budget)
        self.consumed = 0
        self.terminated = False
        self._charges: list[Charge] = []

    @property
    def charges(self) -> tuple[Charge, ...]:
        return tuple(self._charges)

    @property
    def remaining(self) -> int:
        return self.total_budget - self.consumed

    @property
    def closed(self) -> bool:
        return self.terminated or self.remaining <= 0

    def charge(self, policy_id: int, episodes: int, purpose: str = "", phase: int = 0) -> int:
        """Charge up to ``episodes``; returns how many were actually charged.

        A charge that does not fit terminates the ledger after consuming the
        remainder. Nothing is charged once the ledger is terminated.
        """
        if episodes < 0:
            raise ValueError("cannot charge a negative number of episodes")
        if self.terminated:
            return 0
        n = min(int(episodes), self.remaining)
        if n < episodes:
            self.terminated = True
        if n > 0:
            self._charges.append(Charge(int(phase), int(policy_id), n, str(purpose)))
            self.consumed += n
        return n

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["phase", "policy_id", "episodes", "purpose", "cumulative"])
        total = 0
        for c in self._charges:
            total += c.episodes
            writer.writerow([c.phase, c.policy_id, c.episodes, c.purpose, total])
        return buf.getvalue()


def remaining_budget(ledger: EpisodeLedger) -> int:
    return ledger.remaining


def charge(ledger: EpisodeLedger, policy_id: int, episodes: int, tag: str = "", phase: int = 0) -> int:
    return ledger.charge(policy_id, episodes, tag, phase)


# ------------------------------------------------------------------ sampling


def csqa_samples(mdp: MDP, pi: Policy, h: int, n: int, ledger: EpisodeLedger, rng: np.random.Generator,
                 policy_id: int = 0, phase: int = 0) -> np.ndarray:
    """``n`` draws of s_h ~ d_h^pi, one charged episode each.

    Measuring the prepared superposition has the same law as a classical
    forward rollout, which is what is executed here.
    """
    tab = as_tabular(mdp)
    if not 0 <= h < tab.H:
        raise ValueError(f"step {h} outside [0, {tab.H})")
    got = ledger.charge(policy_id, n, "csqa", phase)
    if got == 0:
        raise BudgetExhausted(0)
    if h == 0:
        states = np.full(got, tab.s1, dtype=np.int64)
    else:
        states, _ = kernels.rollout(tab.P, pi.probs, tab.s1, rng.random((got, 2 * h)))
        states = states[:, h]
    if got < n:
        raise BudgetExhausted(got)
    return states


def csqa_sample(mdp: MDP, pi: Policy, h: int, ledger: EpisodeLedger, rng: np.random.Generator,
                policy_id: int = 0, phase: int = 0) -> int:
    return int(csqa_samples(mdp, pi, h, 1, ledger, rng, policy_id, phase)[0])


# -------------------------------------------------------------- estimation


def _simplex_step(p: np.ndarray, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    n = p.shape[0]
    if n == 1 or magnitude <= 0.0:
        return p.copy()
    z = rng.standard_normal(n)
    z -= z.mean()
    z /= np.abs(z).sum()
    neg = z < 0
    t_max = np.min(p[neg] / -z[neg])
    out = p + min(magnitude, t_max) * z
    np.maximum(out, 0.0, out=out)
    return out / out.sum()


def _ball_step(mu: np.ndarray, magnitude: float, bound: float, rng: np.random.Generator) -> np.ndarray:
    if magnitude <= 0.0:
        return mu.copy()
    z = rng.standard_normal(mu.shape[0])
    z /= np.linalg.norm(z)
    proj = float(mu @ z)
    slack = proj * proj - float(mu @ mu) + bound * bound
    t_max = -proj + math.sqrt(max(slack, 0.0))
    return mu + min(magnitude, max(t_max, 0.0)) * z


def amplitude_epsilon(n_outcomes: int, n_samples: int, delta: float, c_amp: float = 1.0) -> float:
    return min(c_amp * n_outcomes * math.log(n_outcomes / delta) / n_samples, 2.0)


def amplitude_estimate(oracle: ProbabilityOracleHandle, n_samples: int, delta: float, noise: NoiseModel,
                       rng: np.random.Generator, c_amp: float = 1.0) -> EstimateReport:
    """Simulated multi-dimensional amplitude estimation from ``n_samples`` quantum samples.

    The samples were charged when collected, so nothing is charged here and
    the reported cost is 0.
    """
    if n_samples < 1:
        raise ValueError("amplitude estimation needs at least one sample")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    p = oracle._p
    eps = amplitude_epsilon(p.shape[0], n_samples, delta, c_amp)
    if noise.failure_injection and rng.random() < delta:
        est = rng.dirichlet(np.ones(p.shape[0]))
        return EstimateReport(est, eps, delta, True, 0, "l1")
    est = _simplex_step(p, noise.magnitude(eps, rng), rng)
    return EstimateReport(est, eps, delta, False, 0, "l1")


def mean_estimate_cost(bound: float, dim: int, epsilon: float, delta: float, c_mean: float = 1.0) -> int:
    return max(1, math.ceil(c_mean * bound * math.sqrt(dim) * math.log(dim / delta) / epsilon))


def mean_estimate(p_oracle: ProbabilityOracleHandle, x_oracle: BinaryOracleHandle, epsilon: float, delta: float,
                  noise: NoiseModel, ledger: EpisodeLedger, policy_id: int, rng: np.random.Generator,
                  c_mean: float = 1.0, phase: int = 0, purpose: str = "mean") -> EstimateReport:
    """Simulated multivariate mean estimation of E_p[X] to l2 accuracy ``epsilon``.

    Charges the query cost to ``policy_id`` before answering; raises
    BudgetExhausted if the ledger cannot cover it.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if p_oracle.size != x_oracle._values.shape[0]:
        raise ValueError("probability and binary oracles disagree on the outcome space")
    C, dim = x_oracle.bound, x_oracle.dim
    cost = mean_estimate_cost(C, dim, epsilon, delta, c_mean)
    got = ledger.charge(policy_id, cost, purpose, phase)
    if got < cost:
        raise BudgetExhausted(got)
    mu = p_oracle._p @ x_oracle._values
    if noise.failure_injection and rng.random() < delta:
        z = rng.standard_normal(dim)
        est = z / np.linalg.norm(z) * C * rng.random() ** (1.0 / dim)
        return EstimateReport(est, epsilon, delta, True, cost, "l2")
    norm = float(np.linalg.norm(mu))
    if norm > C:
        mu = mu * (C / norm)
    est = _ball_step(mu, noise.magnitude(epsilon, rng), C, rng)
    return EstimateReport(est, epsilon, delta, False, cost, "l2")
