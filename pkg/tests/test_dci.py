import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from disentrec.dci import (NoImportanceError, completeness, completeness_terms, dci_scores,
                           disentanglement, disentanglement_terms, importance_from_suite)


def oracle_D(F):
    """Direct loop evaluation of the weighted row-entropy score."""
    M, K = len(F), len(F[0])
    total = sum(sum(r) for r in F)
    out = 0.0
    for row in F:
        mass = sum(row)
        if mass == 0:
            continue
        h = -sum((v / mass) * math.log(v / mass, K) for v in row if v > 0)
        out += (mass / total) * (1 - h)
    return out


def oracle_C(F):
    return oracle_D([list(col) for col in zip(*F)])


def test_hand_worked_case():
    F = [[3, 1], [0, 2]]
    # rows (3/4, 1/4) and (0, 1) with weights 4/6, 2/6
    h_row = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
    assert disentanglement(F) == pytest.approx(4 / 6 * (1 - h_row) + 2 / 6, abs=1e-12)
    assert disentanglement(F) == pytest.approx(0.4591, abs=1e-4)
    # columns (1, 0) and (1/3, 2/3); both columns carry mass 3, so weights are 1/2 each
    h_col = -(1 / 3 * math.log2(1 / 3) + 2 / 3 * math.log2(2 / 3))
    assert completeness(F) == pytest.approx(0.5 + 0.5 * (1 - h_col), abs=1e-12)
    assert completeness(F) == pytest.approx(0.5409, abs=1e-4)


@pytest.mark.parametrize("F,D,C", [([[1, 0], [0, 1]], 1.0, 1.0), ([[1, 1], [1, 1]], 0.0, 0.0)])
def test_trivial_cases(F, D, C):
    assert disentanglement(F) == pytest.approx(D, abs=1e-15)
    assert completeness(F) == pytest.approx(C, abs=1e-15)


def test_oracle_on_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(50):
        M, K = rng.integers(2, 9, size=2)
        F = rng.random((M, K)) * (rng.random((M, K)) < 0.7)
        F[0, 0] += 0.1
        assert abs(disentanglement(F) - oracle_D(F.tolist())) <= 1e-12
        assert abs(completeness(F) - oracle_C(F.tolist())) <= 1e-12


def test_errors():
    with pytest.raises(NoImportanceError, match="no importance mass"):
        disentanglement(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        disentanglement(np.ones((3, 1)))
    with pytest.raises(ValueError):
        completeness(np.ones((1, 3)))
    with pytest.raises(ValueError):
        disentanglement([[1, -1], [0, 1]])


def test_zero_row_has_no_weight():
    d, alpha = disentanglement_terms([[1, 0], [0, 0], [0, 1]])
    assert alpha.tolist() == [0.5, 0.0, 0.5] and d[1] == 1.0
    assert disentanglement([[1, 0], [0, 0], [0, 1]]) == 1.0


mats = arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(2, 6)),
              elements=st.floats(0, 10, allow_subnormal=False)).filter(lambda F: F.sum() > 1e-3)


@settings(max_examples=60, deadline=None)
@given(mats, st.floats(1e-3, 1e3), st.randoms(use_true_random=False))
def test_invariances(F, scale, rnd):
    s = dci_scores(F)
    assert 0 <= s.D <= 1 + 1e-12 and 0 <= s.C <= 1 + 1e-12
    assert ((s.per_dim_D >= -1e-12) & (s.per_dim_D <= 1 + 1e-12)).all()
    assert ((s.per_factor_C >= -1e-12) & (s.per_factor_C <= 1 + 1e-12)).all()
    assert s.alpha.sum() == pytest.approx(1.0) and s.beta.sum() == pytest.approx(1.0)
    t = dci_scores(F * scale)
    assert t.D == pytest.approx(s.D, abs=1e-9) and t.C == pytest.approx(s.C, abs=1e-9)
    rows = list(range(F.shape[0]))
    cols = list(range(F.shape[1]))
    rnd.shuffle(rows)
    rnd.shuffle(cols)
    assert disentanglement(F[rows]) == pytest.approx(s.D, abs=1e-12)
    assert completeness(F[:, cols]) == pytest.approx(s.C, abs=1e-12)


@given(st.integers(2, 8), st.integers(0, 1000))
def test_permutation_matrix_is_perfect(n, seed):
    rng = np.random.default_rng(seed)
    F = np.zeros((n, n))
    F[np.arange(n), rng.permutation(n)] = rng.random(n) + 0.1
    assert disentanglement(F) == pytest.approx(1.0) and completeness(F) == pytest.approx(1.0)


class _Probe:
    def __init__(self, imp):
        self.importances = np.asarray(imp, dtype=float)


class _Suite:
    def __init__(self, probes):
        self.probes = probes


def test_importance_from_suite_columns():
    rng = np.random.default_rng(1)
    imps = [rng.random(5) for _ in range(3)]
    imps[1][:] = 0.0
    F = importance_from_suite(_Suite([_Probe(v) for v in imps]))
    assert F.shape == (5, 3)
    for j, v in enumerate(imps):
        assert np.array_equal(F[:, j], v)
