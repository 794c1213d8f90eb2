import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from disentrec.rankeval import coverage_at_k, evaluate, mrr_at_k, ndcg_at_k, recall_at_k
from disentrec.scoring import ScoreMatrix


def heldout(rows, n_items):
    """csr from a list of per-user relevant item lists."""
    r = [u for u, items in enumerate(rows) for _ in items]
    c = [i for items in rows for i in items]
    return sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(len(rows), n_items))


def ranking_scores(order, n_items):
    """Score row that ranks ``order`` first, in that order."""
    s = np.zeros(n_items)
    for pos, item in enumerate(order):
        s[item] = n_items - pos
    return s


# --- brute force --------------------------------------------------------------------------

def brute_rank(scores, excluded):
    items = [i for i in range(len(scores)) if i not in excluded]
    return sorted(items, key=lambda i: (-scores[i], i))


def brute_metrics(S, H, X, k):
    n_users, n_items = S.shape
    nd, rc, rr, shown = [], [], [], set()
    for u in range(n_users):
        rel = set(np.flatnonzero(H[u]).tolist())
        if not rel:
            continue
        top = brute_rank(S[u], set(np.flatnonzero(X[u]).tolist()))[:k]
        shown.update(top)
        dcg = math.fsum(1 / math.log2(p + 2) for p, i in enumerate(top) if i in rel)
        idcg = math.fsum(1 / math.log2(p + 2) for p in range(min(k, len(rel))))
        nd.append(dcg / idcg)
        rc.append(len(rel & set(top)) / min(k, len(rel)))
        rr.append(next((1 / (p + 1) for p, i in enumerate(top) if i in rel), 0.0))
    return {"ndcg": fmean(nd), "recall": fmean(rc), "mrr": fmean(rr), "coverage": len(shown) / n_items}


def fmean(xs):
    return math.fsum(xs) / len(xs)


def random_instance(rng, n_users=20, n_items=30):
    # integer scores produce plenty of ties
    S = rng.integers(0, 6, (n_users, n_items)).astype(float)
    X = rng.random((n_users, n_items)) < 0.2
    H = (rng.random((n_users, n_items)) < 0.15) & ~X
    H[0] = False
    return S, H, X


def test_oracle_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(200):
        S, H, X = random_instance(rng)
        sm = ScoreMatrix.from_dense(S, exclude=X)
        Hs = sp.csr_matrix(H.astype(float))
        res = evaluate(sm, Hs, cutoffs=(2, 5, 10))
        for k in (2, 5, 10):
            ref = brute_metrics(S, H, X, k)
            for m in ("ndcg", "recall", "mrr", "coverage"):
                assert res[f"{m}@{k}"] == ref[m]
        assert res.n_users_skipped == int((H.sum(1) == 0).sum())


# --- worked examples --------------------------------------------------------------------------

def test_ndcg_examples():
    H = heldout([[4]], 12)
    assert ndcg_at_k(ranking_scores([4, 1, 2], 12)[None], H, 10) == 1.0
    assert ndcg_at_k(ranking_scores([1, 4, 2], 12)[None], H, 10) == pytest.approx(1 / math.log2(3))
    assert ndcg_at_k(ranking_scores(list(range(12))[::-1], 12)[None], heldout([[0]], 12), 10) == 0.0


def test_recall_examples():
    s = ranking_scores(list(range(12)), 12)[None]
    assert recall_at_k(s, heldout([[3, 11]], 12), 10) == 0.5
    assert recall_at_k(s, heldout([[3, 5]], 12), 10) == 1.0
    assert recall_at_k(s, heldout([[0, 1, 9]], 12), 2) == 1.0


def test_mrr_examples():
    s = ranking_scores(list(range(12)), 12)[None]
    assert mrr_at_k(s, heldout([[2, 7]], 12), 10) == pytest.approx(1 / 3)
    assert mrr_at_k(s, heldout([[0]], 12), 10) == 1.0
    assert mrr_at_k(s, heldout([[10]], 12), 10) == 0.0


def test_coverage_examples():
    S = np.array([ranking_scores([0, 1], 4), ranking_scores([1, 2], 4)])
    assert coverage_at_k(S, heldout([[3], [3]], 4), 2) == 0.75
    S = np.array([ranking_scores([0, 1], 4), ranking_scores([2, 3], 4)])
    assert coverage_at_k(S, heldout([[3], [3]], 4), 2) == 1.0


def test_top_popular_coverage_tiny():
    counts = np.arange(1000, dtype=float)
    S = np.tile(counts, (50, 1))
    H = heldout([[u] for u in range(50)], 1000)
    assert coverage_at_k(S, H, 10) == 10 / 1000


def test_training_items_never_ranked():
    S = np.tile(np.arange(10, dtype=float), (3, 1))
    X = np.zeros((3, 10), dtype=bool)
    X[:, 9] = X[:, 8] = True
    top = ScoreMatrix.from_dense(S, exclude=X).topk(5)
    assert not np.isin(top, [8, 9]).any()


def test_ties_ascending_index():
    top = ScoreMatrix.from_dense(np.zeros((1, 6))).topk(3)
    assert top.tolist() == [[0, 1, 2]]


def test_non_finite_scores_rejected():
    with pytest.raises(FloatingPointError):
        ScoreMatrix.from_dense(np.array([[np.nan, 1.0]])).topk(1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_rank_only_dependence_and_ndcg_monotone(seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((15, 25))
    H = sp.csr_matrix((rng.random((15, 25)) < 0.2).astype(float))
    a = evaluate(S, H, (5, 10, 20))
    b = evaluate(np.exp(3 * S) + 7, H, (5, 10, 20))
    assert a.scores == b.scores
    assert a["ndcg@5"] <= a["ndcg@10"] + 1e-12 <= a["ndcg@20"] + 2e-12
    for v in a.scores.values():
        assert 0.0 <= v <= 1.0
