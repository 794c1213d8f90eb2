import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special
from scipy import stats as sps

from disentrec.stats import (DegeneratePredictorError, PairedObservations, betainc, correlation_grid,
                             rmcorr, t_cdf, write_grid_csv)


def ancova_oracle(x, y, groups):
    """r and p from least squares with group dummies, via the partial F test for x."""
    labels = sorted(set(groups))
    D = np.array([[g == lab for lab in labels] for g in groups], dtype=float)
    full = np.column_stack([D, x])
    beta_full, *_ = np.linalg.lstsq(full, y, rcond=None)
    beta_red, *_ = np.linalg.lstsq(D, y, rcond=None)
    sse_full = ((y - full @ beta_full) ** 2).sum()
    sse_red = ((y - D @ beta_red) ** 2).sum()
    dof = len(y) - len(labels) - 1
    r = math.copysign(math.sqrt((sse_red - sse_full) / sse_red), beta_full[-1])
    F = (sse_red - sse_full) / (sse_full / dof)
    return r, dof, float(sps.f.sf(F, 1, dof))


def grouped(rng, k, n):
    groups = np.repeat([f"g{j}" for j in range(k)], n)
    x = rng.standard_normal(k * n) + np.repeat(rng.standard_normal(k) * 3, n)
    y = 0.4 * x + rng.standard_normal(k * n) + np.repeat(rng.standard_normal(k) * 2, n)
    return x, y, groups


def test_hand_chosen_3x4():
    x = np.array([1.0, 2, 3, 4, 2, 3, 5, 6, 0, 1, 1, 3])
    y = np.array([2.0, 3, 3, 5, 1, 2, 2, 4, 7, 8, 9, 9])
    g = ["a"] * 4 + ["b"] * 4 + ["c"] * 4
    res = rmcorr(PairedObservations.from_arrays(x, y, g))
    r, dof, p = ancova_oracle(x, y, g)
    assert res.dof == dof == 8
    assert abs(res.r - r) <= 1e-10 and abs(res.p_value - p) <= 1e-10


def test_random_datasets_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y, g = grouped(rng, int(rng.integers(2, 6)), int(rng.integers(2, 7)))
        res = rmcorr(PairedObservations.from_arrays(x, y, g))
        r, dof, p = ancova_oracle(x, y, g)
        assert abs(res.r - r) <= 1e-10 and abs(res.p_value - p) <= 1e-8 and res.dof == dof
        assert np.sign(res.r) == np.sign(res.common_slope)


def test_perfect_lines():
    x = np.array([0.0, 1, 2, 0, 1, 2])
    y = 2 * x + np.array([0, 0, 0, 5, 5, 5])
    res = rmcorr(PairedObservations.from_arrays(x, y, [0, 0, 0, 1, 1, 1]))
    assert res.r == 1.0 and res.p_value == 0.0


def test_shuffled_pairs_mostly_insignificant():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x, y, g = grouped(rng, 4, 6)
        for lab in set(g):
            idx = np.flatnonzero(g == lab)
            y[idx] = y[rng.permutation(idx)]
        hits += rmcorr(PairedObservations.from_arrays(x, y, g)).p_value > 0.05
    assert hits >= 18


def test_degenerate_and_validation():
    with pytest.raises(DegeneratePredictorError, match="variance"):
        rmcorr(PairedObservations.from_arrays([1, 1, 2, 2], [1, 2, 3, 4], [0, 0, 1, 1]))
    with pytest.raises(ValueError):
        PairedObservations.from_arrays([1, 2], [1, 2], [0, 0])
    with pytest.raises(ValueError):
        PairedObservations.from_arrays([1, 2, 3], [1, 2, 3], [0, 0, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10), st.floats(-5, 5))
def test_invariances(seed, scale, shift):
    rng = np.random.default_rng(seed)
    x, y, g = grouped(rng, 3, 5)
    base = rmcorr(PairedObservations.from_arrays(x, y, g))
    offsets = {lab: rng.standard_normal() * 4 for lab in set(g)}
    x2 = x + np.array([offsets[lab] for lab in g])
    assert rmcorr(PairedObservations.from_arrays(x2, y, g)).r == pytest.approx(base.r, abs=1e-9)
    assert rmcorr(PairedObservations.from_arrays(scale * x + shift, y, g)).r == pytest.approx(base.r, abs=1e-9)
    assert rmcorr(PairedObservations.from_arrays(-scale * x, y, g)).r == pytest.approx(-base.r, abs=1e-9)
    assert -1 <= base.r <= 1 and 0 <= base.p_value <= 1


def t_cdf_quad(t, dof):
    c = math.exp(math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2)) / math.sqrt(dof * math.pi)

    def pdf(s):
        return c * (1 + s * s / dof) ** (-(dof + 1) / 2)

    if t >= 0:
        return 0.5 + integrate.quad(pdf, 0, t, epsabs=1e-14, epsrel=1e-13)[0]
    return 0.5 - integrate.quad(pdf, t, 0, epsabs=1e-14, epsrel=1e-13)[0]


T_TABLE = [(-3.5, 2), (-2.0, 5), (-1.0, 1), (-0.3, 30), (0.0, 7), (0.5, 3),
           (1.0, 10), (1.7, 4), (2.1, 19), (2.9, 8), (4.0, 50), (6.0, 12)]


@pytest.mark.parametrize("t,dof", T_TABLE)
def test_t_cdf_against_quadrature(t, dof):
    assert abs(t_cdf(t, dof) - t_cdf_quad(t, dof)) <= 1e-8


def test_p_decreasing_in_r():
    from disentrec.stats import t_sf_two_sided
    dof = 10
    ps = [t_sf_two_sided(r * math.sqrt(dof / (1 - r * r)), dof) for r in np.linspace(0, 0.99, 50)]
    assert all(b <= a for a, b in zip(ps, ps[1:]))


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2, 3, 0.7), (10, 0.5, 0.95), (30, 2, 0.1)])
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


# --- grids --------------------------------------------------------------------------------

def record(model, dataset, ndcg, D, shap, lime=None):
    return {"model": model, "dataset": dataset,
            "effectiveness": {"scores": {"ndcg@10": ndcg}},
            "dci": None if D is None else {"D": D, "C": D},
            "lime_global": lime, "shap_global": shap}


def planted_records(rng):
    recs = []
    for model, base in (("a", 0.1), ("b", 0.4), ("c", 0.7)):
        for s in range(5):
            D = base + rng.uniform(0, 0.2)
            recs.append(record(model, "ds", rng.random(), D, 0.8 * D + 0.01 * rng.standard_normal(),
                               lime=2 * D + base))
    return recs


def test_grid_diagonal_and_planted():
    rng = np.random.default_rng(0)
    recs = planted_records(rng)
    grid = correlation_grid(recs, "by_dataset", ("ndcg@10", "D", "lime_global", "shap_global"))["ds"]
    for m in ("ndcg@10", "D", "lime_global", "shap_global"):
        assert grid[(m, m)].r == pytest.approx(1.0)
    assert grid[("D", "lime_global")].r > 0.9 and grid[("D", "lime_global")].p_value < 0.05
    assert grid[("D", "shap_global")].r > 0.9


def test_grid_excludes_top_popular_and_by_model():
    rng = np.random.default_rng(1)
    recs = planted_records(rng) + [record("top_popular", "ds", rng.random(), None, None) for _ in range(5)]
    grid = correlation_grid(recs, "by_dataset", ("ndcg@10", "D"))["ds"]
    assert grid[("ndcg@10", "D")].dof == 15 - 3 - 1
    assert grid[("ndcg@10", "ndcg@10")].dof == 20 - 4 - 1
    by_model = correlation_grid(recs, "by_model", ("ndcg@10", "D"))
    assert set(by_model) == {"a", "b", "c", "top_popular"}
    assert by_model["a"][("ndcg@10", "D")] is None  # one dataset, one group


def test_grid_csv(tmp_path):
    grids = correlation_grid(planted_records(np.random.default_rng(2)), "by_dataset", ("D", "shap_global"))
    text = write_grid_csv(grids, tmp_path / "g.csv", "by_dataset").read_text().splitlines()
    assert text[0] == "grouping,grid,x,y,r,dof,p,significant" and len(text) == 5
