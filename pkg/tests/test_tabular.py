import math

import numpy as np
import pytest

from conftest import naive_optimistic_values
from quantum_ucrl.envs import generate, random_tabular_mdp
from quantum_ucrl.mdp import TabularMDP, exact_optimal_values, exact_policy_evaluation
from quantum_ucrl.oracles import EpisodeLedger, NoiseModel
from quantum_ucrl.tabular import (
    CounterState,
    ModelEstimate,
    bonus,
    consistent_c_amp,
    estimate_delta,
    log_term,
    optimistic_value_iteration,
    phase_step,
    run_quantum_ucrl,
)


def test_bonus_values():
    assert bonus(4, S=2, H=3, L=2, c1=1) == 6
    assert bonus(0, S=2, H=3, L=2, c1=1) == 6
    assert bonus(48, S=2, H=3, L=2, c1=1) == pytest.approx(0.5)
    np.testing.assert_allclose(bonus(np.array([0, 4, 48]), 2, 3, 2.0), [6, 6, 0.5])


def test_log_term_floors_log_t():
    assert log_term(2, 2, 3, 2, 0.1) == pytest.approx(math.log(4 * 2 * 3 / 0.1))
    assert log_term(2, 2, 3, 1000, 0.1) == pytest.approx(math.log(24 * math.log(1000) / 0.1))


def test_consistent_c_amp_keeps_radius_inside_bound():
    S, A, H, T, delta, c1 = 3, 2, 3, 20_000, 0.1, 1.0
    c_amp = consistent_c_amp(S, A, H, T, delta, c1)
    L = log_term(S, A, H, T, delta)
    dp = estimate_delta(S, A, H, T, delta)
    for n_used in (1, 2, 8, 1024):
        radius = c_amp * S * math.log(S / dp) / n_used
        for n in range(n_used, 4 * n_used):
            assert radius <= 2 * c1 * S * L / n + 1e-12


# ------------------------------------------------------------ planning


def test_ovi_exact_model_equals_optimal(rng):
    mdp = random_tabular_mdp(4, 3, 3, rng)
    out = optimistic_value_iteration(mdp.P, mdp.R, np.zeros((3, 4, 3)))
    values, _ = exact_optimal_values(mdp)
    np.testing.assert_allclose(out.V[:3], values.V[:3], atol=1e-12)
    np.testing.assert_allclose(out.Q, values.Q, atol=1e-12)


def test_ovi_saturates_with_large_bonus(rng):
    mdp = random_tabular_mdp(3, 2, 3, rng)
    out = optimistic_value_iteration(mdp.P, mdp.R, np.full((3, 3, 2), 6.0))
    assert np.all(out.Q == 3.0)


def test_ovi_matches_loop_oracle(rng):
    for _ in range(100):
        S, A, H = (int(x) for x in rng.integers(1, 5, size=3))
        P = rng.dirichlet(np.ones(S), size=(H, S, A))
        R = rng.uniform(size=(H, S, A))
        b = rng.uniform(0, 2, size=(H, S, A))
        out = optimistic_value_iteration(P, R, b)
        V, Q = naive_optimistic_values(P.tolist(), R.tolist(), b.tolist(), float(H))
        np.testing.assert_allclose(out.Q, Q, atol=1e-12, rtol=0)
        np.testing.assert_allclose(out.V[:H], V[:H], atol=1e-12, rtol=0)


def test_ovi_lowest_index_ties():
    P = np.full((1, 1, 3, 1), 1.0)
    out = optimistic_value_iteration(P, np.full((1, 1, 3), 0.5), np.zeros((1, 1, 3)))
    assert out.policy.action(0, 0) == 0


# ---------------------------------------------------------------- phases


def _phase_setup(rng, S=2, A=2, H=2):
    mdp = random_tabular_mdp(S, A, H, rng)
    return mdp, CounterState.empty(H, S, A), ModelEstimate.uniform(H, S, A)


def test_first_visit_estimates_from_one_sample(rng):
    mdp, state, model = _phase_setup(rng)
    pi = exact_optimal_values(mdp)[1]
    log = []
    visited = phase_step(state, model, pi, EpisodeLedger(100), mdp, NoiseModel("zero"), rng, updates_log=log)
    assert len(visited) == 2 and len(log) == 2
    for ev in log:
        assert ev.n == 1 and ev.n_used == 1
        np.testing.assert_array_equal(model.P_hat[ev.h, ev.s, ev.a], mdp.P[ev.h, ev.s, ev.a])


def test_updates_follow_powers_of_two(rng):
    mdp = TabularMDP(P=np.ones((1, 1, 1, 1)), R=np.zeros((1, 1, 1)), s1=0)
    state, model = CounterState.empty(1, 1, 1), ModelEstimate.uniform(1, 1, 1)
    from quantum_ucrl.mdp import Policy

    log = []
    ledger = EpisodeLedger(100)
    for _ in range(40):
        phase_step(state, model, Policy.uniform(1, 1, 1), ledger, mdp, NoiseModel("zero"), rng, updates_log=log)
    assert [ev.n for ev in log] == [1, 2, 4, 8, 16, 32]
    # the buffer restarts after each rebuild
    assert [ev.n_used for ev in log] == [1, 1, 2, 4, 8, 16]
    assert all(ev.n / 2 <= ev.n_used <= ev.n for ev in log)


def test_phase_stochastic_policy_samples_actions(rng):
    mdp, state, model = _phase_setup(rng, S=1, A=3, H=1)
    from quantum_ucrl.mdp import Policy

    ledger = EpisodeLedger(10_000)
    for _ in range(3000):
        phase_step(state, model, Policy.uniform(1, 1, 3), ledger, mdp, NoiseModel("zero"), rng)
    assert np.all(np.abs(state.n[0, 0] / 3000 - 1 / 3) < 0.03)


# ------------------------------------------------------------------- runs


def test_zero_reward_has_no_regret(rng):
    mdp = random_tabular_mdp(3, 2, 3, rng)
    mdp = TabularMDP(P=mdp.P, R=np.zeros_like(mdp.R), s1=0)
    rec = run_quantum_ucrl(mdp, 300, rng=0)
    assert rec.final_regret == 0.0


def test_single_policy_has_no_regret():
    mdp = TabularMDP(P=np.ones((3, 1, 1, 1)), R=np.full((3, 1, 1), 0.3), s1=0)
    rec = run_quantum_ucrl(mdp, 30, noise=NoiseModel("zero"), rng=0)
    assert np.all(rec.columns["instantaneous_regret"] == 0)


def test_exact_estimates_make_regret_vanish():
    rng = np.random.default_rng(3)
    mdp = random_tabular_mdp(2, 2, 2, rng)
    rec = run_quantum_ucrl(mdp, 4000, noise=NoiseModel("zero"), rng=1, c1=0.05, track=True)
    assert rec.diagnostics["final_counts"].sum() == 4000
    # exact estimates leave only the bonus, which occasionally sends a phase to a rare action
    inst = rec.columns["instantaneous_regret"]
    assert np.mean(np.abs(inst[2000:]) <= 1e-12) >= 0.95
    assert inst[3000:].sum() < inst[2000:3000].sum()


def test_run_record_shape_and_ledger_attribution():
    mdp = generate("tabular", S=3, A=2, H=3, seed=0)
    rec = run_quantum_ucrl(mdp, 100, rng=0, track=True)
    assert rec.n_episodes == 100
    assert list(rec.columns)[:4] == ["episode", "phase", "instantaneous_regret", "cumulative_regret"]
    # T not a multiple of H: the last phase is truncated
    assert rec.columns["phase"][-1] == 34 and (rec.columns["phase"] == 34).sum() == 1
    ledger = rec.diagnostics["ledger"]
    assert all(c.policy_id == c.phase for c in ledger.charges)
    assert np.all(np.diff(rec.columns["updates_so_far"]) >= 0)


def test_invariants_short_run():
    mdp = generate("tabular", S=3, A=2, H=3, seed=1)
    T = 3000
    rec = run_quantum_ucrl(mdp, T, rng=2, noise=NoiseModel("boundary"), track=True)
    d = rec.diagnostics
    assert all(ev.n / 2 <= ev.n_used <= ev.n for ev in d["reestimations"])
    assert np.max(d["radius_violation"]) <= 1e-12 and d["final_radius_violation"] <= 1e-12
    planned = d["planned_v1"][1:]
    assert np.all(planned >= d["v_star"] - 1e-9)
    assert rec.summary["updates"] <= 3 * 2 * 3 * (int(math.log2(T)) + 1)
    per_triple = np.bincount([ev.h * 6 + ev.s * 2 + ev.a for ev in d["reestimations"]], minlength=18)
    assert np.all(per_triple <= np.floor(np.log2(np.maximum(d["final_counts"].ravel(), 1))) + 1)


def test_optimism_failure_rate_with_injection():
    mdp = generate("tabular", S=2, A=2, H=2, seed=0)
    runs = 200
    bad = 0
    for seed in range(runs):
        rec = run_quantum_ucrl(mdp, 200, delta=0.1, rng=seed, noise=NoiseModel("uniform", True), track=True)
        planned = rec.diagnostics["planned_v1"][1:]
        bad += bool(np.any(planned < rec.diagnostics["v_star"] - 1e-9))
    assert bad / runs <= 0.1 + 3 * math.sqrt(0.1 * 0.9 / runs)


def test_invalid_arguments():
    from quantum_ucrl.mdp import ConfigurationError

    mdp = generate("tabular", S=2, A=2, H=3, seed=0)
    for kwargs in ({"T": 2}, {"T": 10, "delta": 1.0}, {"T": 10, "c1": 0.0}):
        with pytest.raises(ConfigurationError):
            run_quantum_ucrl(mdp, **kwargs)
