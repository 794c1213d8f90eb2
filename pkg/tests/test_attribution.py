import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from disentrec.attribution import (build_attribution_matrix, global_score, js_divergence, lime_local,
                                   shap_batch, shap_local)
from disentrec.probeclf import fit_gbt, fit_probe_suite


def brute_shapley(f, x, background):
    """Exact interventional Shapley values from all 2^M coalitions."""
    M = len(x)

    def value(S):
        filled = background.copy()
        filled[:, list(S)] = x[list(S)]
        return f(filled).mean()

    cache = {S: value(S) for r in range(M + 1) for S in itertools.combinations(range(M), r)}
    phi = np.zeros(M)
    for i in range(M):
        others = [j for j in range(M) if j != i]
        for r in range(M):
            w = math.factorial(r) * math.factorial(M - r - 1) / math.factorial(M)
            for S in itertools.combinations(others, r):
                phi[i] += w * (cache[tuple(sorted(S + (i,)))] - cache[S])
    return phi


def random_probe(rng, M, n=120, depth=3):
    X = rng.standard_normal((n, M))
    w = rng.standard_normal(M)
    y = (X @ w + 0.5 * X[:, 0] * X[:, -1] > 0).astype(int)
    return fit_gbt(X, y, n_trees=15, max_depth=depth), X


@pytest.mark.parametrize("M", [2, 3, 5, 7])
def test_kernelshap_equals_bruteforce(M):
    rng = np.random.default_rng(M)
    probe, X = random_probe(rng, M)
    bg = X[:8]
    for x in X[10:13]:
        ref = brute_shapley(probe.predict_proba, x, bg)
        got = shap_local(probe, x, bg, absolute=False)
        assert np.abs(got - ref).max() <= 1e-6


class _Symmetrized:
    """Probe averaged over swapping features 0 and 1, so those two are exchangeable."""

    def __init__(self, probe):
        self.probe = probe

    def predict_proba(self, Z):
        return 0.5 * (self.probe.predict_proba(Z) + self.probe.predict_proba(Z[:, [1, 0, 2]]))


def test_efficiency_and_symmetry():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((150, 3))
    y = (X[:, 0] + X[:, 2] > 0).astype(int)
    probe = fit_gbt(X, y, n_trees=10, max_depth=2)
    bg, x = X[:10], X[20]
    phi = shap_local(probe, x, bg, absolute=False)
    expected = probe.predict_proba(x[None])[0] - probe.predict_proba(bg).mean()
    assert phi.sum() == pytest.approx(expected, abs=1e-6)
    x_sym = x.copy()
    x_sym[1] = x_sym[0]
    bg_sym = bg.copy()
    bg_sym[:, 1] = bg_sym[:, 0]
    phi = shap_local(_Symmetrized(probe), x_sym, bg_sym, absolute=False)
    assert abs(phi[0] - phi[1]) <= 1e-6


def test_sampled_shap_close_and_converges():
    rng = np.random.default_rng(2)
    probe, X = random_probe(rng, 6)
    bg, x = X[:8], X[30]
    exact = shap_local(probe, x, bg, absolute=False)
    errs = {}
    for budget in (16, 32):
        runs = np.array([shap_local(probe, x, bg, n_coalitions=budget, seed=s, absolute=False)
                         for s in range(30)])
        errs[budget] = np.sqrt(((runs - exact) ** 2).mean())
    assert errs[32] < errs[16]


def test_lime_single_feature_probe():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 4))
    probe = fit_gbt(X, (X[:, 0] > 0).astype(int), n_trees=30, max_depth=2)
    att = lime_local(probe, X[0] * 0.1, X, n_samples=1000, seed=1)
    assert att[0] / att.sum() >= 0.9
    assert np.array_equal(att, lime_local(probe, X[0] * 0.1, X, n_samples=1000, seed=1))


def test_lime_constant_probe_zero():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 3))
    probe = fit_gbt(X, (X[:, 0] > 0).astype(int), n_trees=0)
    assert lime_local(probe, X[0], X, n_samples=200).tolist() == [0.0, 0.0, 0.0]


def test_lime_budget_and_flat_background():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 3))
    X[:, 2] = 4.0
    probe = fit_gbt(X, (X[:, 0] > 0).astype(int), n_trees=5)
    assert np.isfinite(lime_local(probe, X[0], X, n_samples=100)).all()
    with pytest.raises(ValueError):
        lime_local(probe, X[0], X, n_samples=99)


def suite_for(Z, Y, seed=0):
    users = np.random.default_rng(seed).permutation(len(Z))
    n = len(Z) * 3 // 5
    return fit_probe_suite(Z, Y, users[:n], users[n:n + len(Z) // 5],
                           {"n_trees": (20,), "max_depth": (2,), "shrinkage": (0.1,)})


def test_attribution_matrix_shape_subsample_and_duplicates():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((200, 4))
    y0 = (Z[:, 0] > 0).astype(int)
    Y = np.column_stack([y0, y0, (Z[:, 2] > 0).astype(int)])
    suite = suite_for(Z, Y)
    S = build_attribution_matrix(suite, Z, "shap", n_users=40, background_size=10, seed=3)
    assert S.shape == (4, 3) and (S >= 0).all()
    cos = S[:, 0] @ S[:, 1] / np.linalg.norm(S[:, 0]) / np.linalg.norm(S[:, 1])
    assert cos >= 0.99
    full = build_attribution_matrix(suite, Z[:30], "lime", budget=200, n_users=30, background_size=10)
    none = build_attribution_matrix(suite, Z[:30], "lime", budget=200, n_users=None, background_size=10)
    assert np.array_equal(full, none)


# --- global score -------------------------------------------------------------------------

def test_global_score_examples():
    assert global_score(np.ones((4, 3))).value == 0.0
    assert global_score(np.eye(3)).value == pytest.approx(1.0)
    js = global_score(np.array([[0.5, 1.0], [0.5, 0.0]])).value
    # m = (0.75, 0.25)
    hand = 0.5 * (0.5 * math.log2(0.5 / 0.75) + 0.5 * math.log2(0.5 / 0.25)) + 0.5 * math.log2(1 / 0.75)
    assert js == pytest.approx(hand, abs=1e-12) and js == pytest.approx(0.3113, abs=1e-4)


def test_global_score_zero_column_flagged():
    res = global_score(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert res.flagged_columns == [1] and res.n_pairs == 1
    assert res.value == pytest.approx(js_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])))


S_mats = arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(2, 6)), elements=st.floats(0, 5))


@settings(max_examples=80, deadline=None)
@given(S_mats, st.randoms(use_true_random=False))
def test_global_score_properties(S, rnd):
    g = global_score(S).value
    assert 0.0 <= g <= 1.0
    cols = list(range(S.shape[1]))
    rnd.shuffle(cols)
    assert global_score(S[:, cols]).value == pytest.approx(g, abs=1e-12)
    scale = np.array([rnd.uniform(0.1, 10) for _ in range(S.shape[1])])
    assert global_score(S * scale).value == pytest.approx(g, abs=1e-9)


def test_global_score_rejects_bad_input():
    with pytest.raises(ValueError):
        global_score(np.ones((3, 1)))
    with pytest.raises(ValueError):
        global_score(-np.ones((3, 2)))
