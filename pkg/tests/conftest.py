import numpy as np
import pytest

from mortal_world import FiniteMdp


def random_mdp(rng, max_states=20, max_actions=4, min_terminal=0, sparsity=0.5):
    """Random valid MDP; terminal rows are absorbing."""
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    T = rng.random((S, A, S)) * (rng.random((S, A, S)) > sparsity)
    # every row needs some mass
    for s in range(S):
        for a in range(A):
            if T[s, a].sum() == 0:
                T[s, a, rng.integers(S)] = 1.0
    T /= T.sum(axis=2, keepdims=True)
    k = int(rng.integers(min_terminal, S))
    terminal = [int(x) for x in rng.choice(S, size=k, replace=False)]
    for t in terminal:
        T[t] = 0.0
        T[t, :, t] = 1.0
    return FiniteMdp.from_dense(T, terminal)


@pytest.fixture
def life_death():
    """State 0: action 0 stays, action 1 dies (state 1 is terminal)."""
    T = np.zeros((2, 2, 2))
    T[0, 0, 0] = 1.0
    T[0, 1, 1] = 1.0
    T[1, :, 1] = 1.0
    return FiniteMdp.from_dense(T, [1])


@pytest.fixture
def chain3():
    """s0 -> s1 -> s2 (terminal) with a single action."""
    T = np.zeros((3, 1, 3))
    T[0, 0, 1] = T[1, 0, 2] = T[2, 0, 2] = 1.0
    return FiniteMdp.from_dense(T, [2])


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    results = getattr(test_acceptance, "RESULTS", {})
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
