import itertools

import numpy as np
import pytest

from quantum_ucrl.mdp import Policy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_policy(rng, H, S, A, deterministic=False):
    if deterministic:
        return Policy.deterministic(rng.integers(0, A, size=(H, S)), A)
    return Policy(rng.dirichlet(np.ones(A), size=(H, S)))


def naive_policy_values(P, R, probs):
    """Backward induction with explicit loops; shares no code with the package."""
    H, S, A = len(P), len(P[0]), len(P[0][0])
    V = [[0.0] * S for _ in range(H + 1)]
    Q = [[[0.0] * A for _ in range(S)] for _ in range(H)]
    for h in reversed(range(H)):
        for s in range(S):
            total = 0.0
            for a in range(A):
                q = R[h][s][a]
                for t in range(S):
                    q += P[h][s][a][t] * V[h + 1][t]
                Q[h][s][a] = q
                total += probs[h][s][a] * q
            V[h][s] = total
    return np.array(V), np.array(Q)


def naive_optimistic_values(P, R, b, cap):
    H, S, A = len(P), len(P[0]), len(P[0][0])
    V = [[0.0] * S for _ in range(H + 1)]
    Q = [[[0.0] * A for _ in range(S)] for _ in range(H)]
    for h in reversed(range(H)):
        for s in range(S):
            best = -float("inf")
            for a in range(A):
                q = R[h][s][a] + b[h][s][a]
                for t in range(S):
                    q += P[h][s][a][t] * V[h + 1][t]
                q = min(q, cap)
                Q[h][s][a] = q
                best = max(best, q)
            V[h][s] = best
    return np.array(V), np.array(Q)


def all_deterministic_policies(H, S, A):
    for choice in itertools.product(range(A), repeat=H * S):
        yield Policy.deterministic(np.array(choice).reshape(H, S), A)


def chi_square_ok(counts, probs, level=0.01):
    """Pearson test with cells of expected count < 5 pooled."""
    from scipy.stats import chi2

    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(probs, dtype=float) * counts.sum()
    if np.any(counts[expected == 0] > 0):
        return False
    keep = expected >= 5
    obs = list(counts[keep])
    exp = list(expected[keep])
    rest_o, rest_e = counts[~keep].sum(), expected[~keep].sum()
    if rest_e > 0:
        obs.append(rest_o)
        exp.append(rest_e)
    obs, exp = np.array(obs), np.array(exp)
    if obs.size < 2:
        return True
    stat = float(((obs - exp) ** 2 / exp).sum())
    return stat <= chi2.ppf(1 - level, obs.size - 1)


# ------------------------------------------------------- acceptance report

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def report():
    """Record one acceptance line: report(number, title, passed, detail)."""

    def record(number: int, title: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE[number] = (title, bool(passed), detail)
        print(f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'} ({detail})")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'} ({detail})")
