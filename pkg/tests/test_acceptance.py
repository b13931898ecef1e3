"""Acceptance criteria at their stated tolerances.

Each test records a PASS/FAIL line that is echoed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from conftest import chi_square_ok, naive_optimistic_values, random_policy
from quantum_ucrl import envs
from quantum_ucrl.envs import random_linear_mixture_mdp, random_tabular_mdp
from quantum_ucrl.harness import ExperimentConfig, run
from quantum_ucrl.mdp import occupancy_measure, value_decomposition_residual
from quantum_ucrl.oracles import (
    BinaryOracleHandle,
    EpisodeLedger,
    NoiseModel,
    ProbabilityOracleHandle,
    amplitude_estimate,
    csqa_samples,
    mean_estimate,
)
from quantum_ucrl.tabular import optimistic_value_iteration, run_quantum_ucrl
from quantum_ucrl.vtr import (
    ConfidenceEllipsoid,
    RegressionState,
    optimistic_planning,
    phase_cap,
    run_quantum_ucrl_vtr,
    weighted_ridge_update,
)

pytestmark = pytest.mark.acceptance


def test_oracle_contracts(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    violations = 0
    modes = ("zero", "uniform", "boundary")
    for i in range(1000):
        n = int(rng.integers(1, 9))
        p = rng.dirichlet(np.full(n, 0.7))
        noise = NoiseModel(modes[i % 3])
        rep = amplitude_estimate(ProbabilityOracleHandle(p), int(rng.integers(1, 2000)), 0.05, noise, rng)
        violations += np.abs(rep.estimate - p).sum() > rep.epsilon + 1e-12
        d = int(rng.integers(1, 6))
        X = rng.uniform(-1, 1, size=(n, d))
        C = float(np.linalg.norm(X, axis=1).max())
        eps = float(rng.uniform(1e-3, 2 * C))
        rep = mean_estimate(ProbabilityOracleHandle(p), BinaryOracleHandle(X, C), eps, 0.05, noise,
                            EpisodeLedger(10**12), 0, rng)
        violations += np.linalg.norm(rep.estimate - p @ X) > eps + 1e-12
    calls, delta = 10_000, 0.1
    limit = delta + 3 * math.sqrt(delta * (1 - delta) / calls)
    inject = NoiseModel("uniform", failure_injection=True)
    amp_rate = np.mean([amplitude_estimate(ProbabilityOracleHandle([0.3, 0.7]), 40, delta, inject, rng).failed
                        for _ in range(calls)])
    mean_rate = np.mean([mean_estimate(ProbabilityOracleHandle([0.5, 0.5]), BinaryOracleHandle([[1.0], [0.0]], 1.0),
                                       0.1, delta, inject, EpisodeLedger(10**9), 0, rng).failed
                         for _ in range(calls)])
    elapsed = time.perf_counter() - start
    ok = violations == 0 and amp_rate <= limit and mean_rate <= limit and elapsed < 60
    report(1, "oracle contracts", ok, f"violations={violations}, failure rates {amp_rate:.4f}/{mean_rate:.4f} "
                                      f"<= {limit:.4f}, {elapsed:.1f}s")
    assert ok


def test_csqa_distribution(report):
    rng = np.random.default_rng(77)
    start = time.perf_counter()
    rejected = []
    for i in range(10):
        S, A, H = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 6))
        mdp = random_tabular_mdp(S, A, H, rng)
        pi = random_policy(rng, H, S, A)
        h = int(rng.integers(0, H))
        states = csqa_samples(mdp, pi, h, 100_000, EpisodeLedger(100_000), rng)
        if not chi_square_ok(np.bincount(states, minlength=S), occupancy_measure(mdp, pi, h).sum(axis=1)):
            rejected.append(i)
    elapsed = time.perf_counter() - start
    ok = not rejected and elapsed < 60
    report(2, "csqa chi-square", ok, f"rejected instances {rejected}, {elapsed:.1f}s")
    assert ok


def test_tabular_invariants(report):
    S, A, H, T = 3, 2, 3, 20_000
    start = time.perf_counter()
    counts = dict(sandwich=0, radius=0, optimism=0, updates=0)
    cap = S * A * H * (int(math.log2(T)) + 1)
    for seed in range(20):
        mdp = envs.generate("tabular", S=S, A=A, H=H, seed=seed)
        noise = NoiseModel("boundary" if seed % 2 == 0 else "uniform")
        rec = run_quantum_ucrl(mdp, T, 0.1, noise=noise, rng=seed, track=True)
        d = rec.diagnostics
        counts["sandwich"] += sum(not (ev.n / 2 <= ev.n_used <= ev.n) for ev in d["reestimations"])
        counts["radius"] += int(np.sum(d["radius_violation"] > 1e-12)) + int(d["final_radius_violation"] > 1e-12)
        counts["optimism"] += int(np.sum(d["planned_v1"][1:] < d["v_star"] - 1e-9))
        counts["updates"] += rec.summary["updates"] > cap
    elapsed = time.perf_counter() - start
    ok = not any(counts.values()) and elapsed < 300
    report(3, "tabular invariants", ok, f"violations {counts}, {elapsed:.1f}s")
    assert ok


def test_vtr_invariants(report):
    d_, S, A, H, T = 3, 3, 2, 3, 20_000
    start = time.perf_counter()
    counts = dict(det=0, coverage=0, feature=0, target=0, phases=0)
    cap = phase_cap(d_, H, T, 4.0)
    phases = []
    for seed in range(20):
        mdp = envs.generate("linmix", S=S, A=A, H=H, d=d_, seed=seed)
        noise = NoiseModel("boundary" if seed % 2 == 0 else "uniform")
        # the invariants do not depend on c_mean; the small value gives many more phases
        for c_mean in (1.0, 0.01):
            rec = run_quantum_ucrl_vtr(mdp, T, 0.1, c_K=4.0, c_mean=c_mean, noise=noise, rng=seed, track=True)
            g = rec.diagnostics
            phases.append(rec.summary["phases"])
            counts["det"] += int(np.sum(np.abs(g["det_ratio_argmax"] / 2.0 - 1.0) > 1e-8))
            counts["det"] += int(np.sum(g["det_ratio_min_other"] < 1.0 - 1e-12))
            counts["coverage"] += int(np.sum(g["coverage"] > g["beta"]))
            counts["feature"] += int(np.sum(g["feature_error"] > g["w"] + 1e-12))
            counts["target"] += int(np.sum(g["target_error"] > 2 * g["w"] + 1e-12))
            counts["phases"] += rec.summary["phases"] > cap
    elapsed = time.perf_counter() - start
    ok = not any(counts.values()) and elapsed < 600
    report(4, "VTR invariants", ok, f"violations {counts}, phases per run {min(phases)}-{max(phases)} "
                                    f"(cap {cap}), {elapsed:.1f}s")
    assert ok


def _ratios(quantum, classical, T):
    q = np.array([[r.regret_at(T // 4), r.regret_at(T)] for r in quantum]).mean(axis=0)
    c = np.array([[r.regret_at(T // 4), r.regret_at(T)] for r in classical]).mean(axis=0)
    return q, c, q[1] / q[0], c[1] / c[0]


def _separation(number, title, report, quantum_cfg, classical_cfg, T, budget):
    start = time.perf_counter()
    quantum, classical = [], []
    for seed in range(10):
        quantum.append(run(quantum_cfg.replace(seed=seed, env_seed=seed)))
        classical.append(run(classical_cfg.replace(seed=seed, env_seed=seed)))
    q, c, qr, cr = _ratios(quantum, classical, T)
    elapsed = time.perf_counter() - start
    ok = qr <= 1.7 and cr >= 1.8 and q[1] < c[1] and elapsed < budget
    report(number, title, ok, f"quantum R(T/4)={q[0]:.1f} R(T)={q[1]:.1f} ratio={qr:.3f}; classical "
                              f"R(T/4)={c[0]:.1f} R(T)={c[1]:.1f} ratio={cr:.3f}; {elapsed:.0f}s")
    assert ok


def test_growth_separation_tabular(report):
    T = 100_000
    base = ExperimentConfig(T=T, env_kind="tabular", S=2, A=2, H=3, gap=0.01)
    _separation(5, "tabular growth separation", report,
                base.replace(algorithm="qucrl", c1=0.1, c_amp=0.1),
                base.replace(algorithm="classical-ucrl", c_classical=0.1), T, 900)


def test_growth_separation_linear_mixture(report):
    T = 100_000
    base = ExperimentConfig(T=T, env_kind="linmix", S=3, A=2, H=2, d=2, gap=0.05)
    _separation(6, "linear mixture growth separation", report,
                base.replace(algorithm="qucrl-vtr", c_mean=0.1),
                base.replace(algorithm="classical-vtr", c_beta=1.0), T, 1200)


def _mc_backup(psi, ell, R_h, V_next, H, n, rng):
    d = ell.center.shape[0]
    g = rng.normal(size=(n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    g *= rng.uniform(size=(n, 1)) ** (1.0 / d)
    thetas = ell.center + ell.beta * np.linalg.solve(np.linalg.cholesky(ell.Lambda).T, g.T).T
    from quantum_ucrl.mdp import phi_table

    vals = np.einsum("sad,nd->san", phi_table(psi, V_next), thetas)
    return np.clip(R_h + vals.max(axis=-1), 0.0, H)


def test_brute_force_equivalence(report):
    rng = np.random.default_rng(31)
    start = time.perf_counter()
    ovi_err = 0.0
    for _ in range(100):
        S, A, H = (int(x) for x in rng.integers(1, 6, size=3))
        P = rng.dirichlet(np.ones(S), size=(H, S, A))
        R = rng.uniform(size=(H, S, A))
        b = rng.uniform(0, H, size=(H, S, A))
        out = optimistic_value_iteration(P, R, b)
        V, Q = naive_optimistic_values(P.tolist(), R.tolist(), b.tolist(), float(H))
        ovi_err = max(ovi_err, float(np.abs(out.Q - Q).max()), float(np.abs(out.V[:H] - V[:H]).max()))
    mc_excess, mc_gap = -np.inf, 0.0
    for _ in range(10):
        mdp = random_linear_mixture_mdp(2, 2, 2, 2, rng)
        regs = []
        for _h in range(2):
            st = RegressionState.empty(2)
            for _u in range(int(rng.integers(1, 6))):
                weighted_ridge_update(st, rng.uniform(0, 1, size=2), float(rng.uniform(0, 2)), 1.0)
            regs.append(st)
        ells = [ConfidenceEllipsoid(r, float(rng.uniform(0.1, 2.0))) for r in regs]
        Q, V, _ = optimistic_planning(mdp.psi, ells, mdp.R)
        for h in range(2):
            sampled = _mc_backup(mdp.psi, ells[h], mdp.R[h], V[h + 1], 2.0, 10**6, rng)
            mc_excess = max(mc_excess, float((sampled - Q[h]).max()))
            mc_gap = max(mc_gap, float((Q[h] - sampled).max()))
    ridge_err = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 6))
        st = RegressionState.empty(d)
        phis = rng.normal(size=(20, d))
        ys = rng.uniform(0, 3, size=20)
        ws = rng.uniform(0.05, 2.0, size=20)
        for phi, y, w in zip(phis, ys, ws):
            weighted_ridge_update(st, phi, y, w)
        M = np.eye(d) + (phis / ws[:, None] ** 2).T @ phis
        rhs = (phis * (ys / ws**2)[:, None]).sum(axis=0)
        ridge_err = max(ridge_err, float(np.abs(st.theta_bar - np.linalg.solve(M, rhs)).max()))
    elapsed = time.perf_counter() - start
    ok = ovi_err <= 1e-12 and mc_excess <= 1e-6 and ridge_err <= 1e-8 and elapsed < 300
    report(7, "brute-force equivalence", ok, f"OVI err {ovi_err:.1e}, sampled-minus-planned max {mc_excess:.1e} "
                                             f"(largest shortfall {mc_gap:.1e}), ridge err {ridge_err:.1e}, "
                                             f"{elapsed:.1f}s")
    assert ok


def test_value_decomposition(report):
    rng = np.random.default_rng(8)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        S, A, H = int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 6))
        mdp = random_tabular_mdp(S, A, H, rng)
        pi = random_policy(rng, H, S, A)
        pi_hat = random_policy(rng, H, S, A, deterministic=bool(rng.integers(2)))
        Q_hat = rng.uniform(0, H, size=(H, S, A))
        worst = max(worst, value_decomposition_residual(mdp, pi, pi_hat, Q_hat))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 60
    report(8, "value decomposition", ok, f"max residual {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_determinism(report):
    configs = [
        ExperimentConfig(algorithm="qucrl", T=3000, noise="uniform", failure_injection=True, seed=4),
        ExperimentConfig(algorithm="classical-ucrl", T=500, seed=4),
        ExperimentConfig(algorithm="qucrl-vtr", env_kind="linmix", T=3000, c_mean=0.1, noise="boundary",
                         failure_injection=True, seed=4),
        ExperimentConfig(algorithm="classical-vtr", env_kind="linmix", T=500, seed=4),
    ]
    mismatched = []
    for cfg in configs:
        a, b = run(cfg), run(cfg)
        if a.to_csv() + a.summary_json() != b.to_csv() + b.summary_json():
            mismatched.append(cfg.algorithm)
    ok = not mismatched
    report(9, "determinism", ok, f"non-identical reruns: {mismatched or 'none'}")
    assert ok
