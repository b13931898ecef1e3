import numpy as np
import pytest

from quantum_ucrl.baselines import ClassicalCounters, hoeffding_bonus, run_classical_ucrl, run_classical_ucrl_vtr
from quantum_ucrl.envs import generate, random_linear_mixture_mdp, random_tabular_mdp
from quantum_ucrl.mdp import ConfigurationError, LinearMixtureMDP, TabularMDP
from quantum_ucrl.records import BASE_COLUMNS


def test_counters_are_empirical_frequencies():
    c = ClassicalCounters.empty(2, 3, 1)
    c.observe(np.array([0, 1, 1]), np.array([0, 0]))
    c.observe(np.array([0, 0, 2]), np.array([0, 0]))
    assert c.n[0, 0, 0] == 2
    np.testing.assert_allclose(c.P_hat[0, 0, 0], [0.5, 0.5, 0.0])
    np.testing.assert_allclose(c.P_hat[1, 1, 0], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(c.P_hat[1, 0, 0], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(c.P_hat[1, 2, 0], np.full(3, 1 / 3))  # unvisited stays uniform


def test_hoeffding_bonus():
    np.testing.assert_allclose(hoeffding_bonus([0, 4], S=2, H=3, L=2.0), [3 * 2, 3 * 1.0])


def test_ucrl_zero_reward(rng):
    mdp = random_tabular_mdp(3, 2, 3, rng)
    rec = run_classical_ucrl(TabularMDP(P=mdp.P, R=np.zeros_like(mdp.R), s1=0), 200, rng=0)
    assert rec.final_regret == 0.0 and rec.n_episodes == 200


def test_ucrl_single_policy():
    mdp = TabularMDP(P=np.ones((2, 1, 1, 1)), R=np.full((2, 1, 1), 0.4), s1=0)
    assert run_classical_ucrl(mdp, 20, rng=0).final_regret == 0.0


def test_ucrl_seed_stability():
    mdp = generate("tabular", S=2, A=2, H=2, seed=0)
    a = run_classical_ucrl(mdp, 10_000, rng=1).final_regret
    b = run_classical_ucrl(mdp, 10_000, rng=2).final_regret
    assert abs(a - b) <= 0.2 * max(a, b)


def test_ucrl_schema():
    rec = run_classical_ucrl(generate("tabular", S=2, A=2, H=2, seed=0), 50, rng=0)
    assert tuple(rec.columns)[:4] == BASE_COLUMNS
    np.testing.assert_array_equal(rec.columns["phase"], np.arange(1, 51))


def test_vtr_zero_reward(rng):
    mdp = random_linear_mixture_mdp(2, 3, 2, 2, rng)
    mdp = LinearMixtureMDP(psi=mdp.psi, theta=mdp.theta, R=np.zeros((2, 3, 2)), s1=0)
    assert run_classical_vtr_final(mdp, 200) == 0.0


def run_classical_vtr_final(mdp, T, seed=0):
    return run_classical_ucrl_vtr(mdp, T, rng=seed).final_regret


def test_vtr_single_kernel_converges():
    mdp = random_linear_mixture_mdp(1, 3, 2, 2, np.random.default_rng(5))
    rec = run_classical_ucrl_vtr(mdp, 2000, rng=0)
    # one kernel: transitions do not depend on theta, so only rewards matter
    assert np.all(np.abs(rec.columns["instantaneous_regret"][-500:]) <= 1e-12)


def test_vtr_seed_stability():
    mdp = generate("linmix", S=3, A=2, H=2, d=2, gap=0.1, seed=0)
    a = run_classical_vtr_final(mdp, 10_000, 1)
    b = run_classical_vtr_final(mdp, 10_000, 2)
    assert abs(a - b) <= 0.2 * max(a, b)


def test_vtr_needs_mixture():
    with pytest.raises(ConfigurationError):
        run_classical_ucrl_vtr(generate("tabular", S=2, A=2, H=2), 10)
