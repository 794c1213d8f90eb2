import numpy as np
import pytest

from disentrec.dataio import InteractionMatrix, _build_csr
from disentrec.synth import SynthSpec, generate


def matrix_from_pairs(pairs, n_users=None, n_items=None):
    """InteractionMatrix with ids ``u<index>`` / ``i<index>``."""
    pairs = sorted(set((int(u), int(i)) for u, i in pairs))
    nu = n_users or (max(u for u, _ in pairs) + 1)
    ni = n_items or (max(i for _, i in pairs) + 1)
    rows = np.array([u for u, _ in pairs], dtype=np.int64)
    cols = np.array([i for _, i in pairs], dtype=np.int64)
    return InteractionMatrix(_build_csr(rows, cols, nu, ni), tuple(f"u{u}" for u in range(nu)),
                             tuple(f"i{i}" for i in range(ni)))


def random_matrix(rng, n_users, n_items, density=0.3, min_per_user=0):
    dense = rng.random((n_users, n_items)) < density
    for u in range(n_users):
        short = min_per_user - dense[u].sum()
        if short > 0:
            dense[u, rng.choice(np.flatnonzero(~dense[u]), short, replace=False)] = True
    u, i = np.nonzero(dense)
    return matrix_from_pairs(zip(u.tolist(), i.tolist()), n_users, n_items)


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthSpec(n_users=240, n_items=160, K=4, M=4, items_per_factor=30,
                              interactions_per_user=15, seed=7))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
