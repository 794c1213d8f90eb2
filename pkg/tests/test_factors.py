import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import matrix_from_pairs
from disentrec.factors import (DROP, FactorMatrix, InsufficientFactorsError, TagClusterModel, TagTable,
                               assign_items, assign_users, drop_degenerate, kmeans, kmeans_tags,
                               load_factors, read_tag_file, save_factors, shelf_factors, top_tags)


def table(rows, n_items):
    return TagTable.from_rows([(i, t, r) for i, t, r in rows], n_items)


# --- top_tags ---------------------------------------------------------------------------

def test_top_tags_tie_broken_lexicographically():
    rows = [(0, "A", 1), (1, "A", 1), (2, "A", 1), (0, "C", 1), (1, "C", 1), (3, "B", 1), (4, "B", 1)]
    assert sorted(top_tags(table(rows, 5), 2).distinct_tags()) == ["A", "B"]


def test_top_tags_keeps_most_frequent():
    rng = np.random.default_rng(0)
    rows, counts = [], {}
    for t in range(300):
        n = int(rng.integers(1, 50))
        counts[f"t{t:03d}"] = n
        rows += [(i, f"t{t:03d}", 1.0) for i in range(n)]
    kept = set(top_tags(table(rows, 50), 100).distinct_tags())
    expected = set(sorted(counts, key=lambda t: (-counts[t], t))[:100])
    assert kept == expected


def test_top_tags_fewer_than_n_warns():
    tags = table([(0, "a", 1), (1, "b", 1)], 2)
    with pytest.warns(UserWarning):
        out = top_tags(tags, 100)
    assert sorted(out.distinct_tags()) == ["a", "b"] and len(out) == 2


# --- k-means ----------------------------------------------------------------------------

def test_kmeans_separable_groups():
    rows = [(0, t, 1) for t in "abc"] + [(1, t, 1) for t in "abc"] + [(2, t, 1) for t in "xyz"]
    model = kmeans_tags(table(rows, 3), k=2, seed=0)
    a = model.tag_assignment
    assert a["a"] == a["b"] == a["c"] != a["x"] == a["y"] == a["z"]
    assert model.inertia == pytest.approx(0.0, abs=1e-12)


def test_kmeans_k_equals_tags():
    rows = [(i, f"t{i}", 1.0) for i in range(5)]
    model = kmeans_tags(table(rows, 5), k=5, seed=1)
    assert sorted(model.tag_assignment.values()) == list(range(5))
    assert model.inertia == pytest.approx(0.0, abs=1e-12)


def inertia_of(X, labels):
    return sum(((X[labels == c] - X[labels == c].mean(0)) ** 2).sum() for c in set(labels.tolist()))


def test_kmeans_matches_best_two_partition():
    X = np.array([[0.0, 0.1], [0.2, 0.0], [0.1, 0.3], [2.0, 2.1], [2.2, 1.8], [1.0, 1.2]])
    best = min((np.array(bits) for bits in itertools.product((0, 1), repeat=6) if 0 < sum(bits) < 6),
               key=lambda lab: inertia_of(X, lab))
    _, labels, history = kmeans(X, 2, seed=0)
    same = (labels == best).all() or (labels == 1 - best).all()
    assert same and history[-1] == pytest.approx(inertia_of(X, best))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_kmeans_inertia_non_increasing_and_deterministic(seed, k):
    X = np.random.default_rng(seed).random((20, 4))
    C1, l1, h1 = kmeans(X, k, seed=seed)
    C2, l2, h2 = kmeans(X, k, seed=seed)
    assert np.array_equal(C1, C2) and np.array_equal(l1, l2)
    assert all(b <= a + 1e-12 for a, b in zip(h1, h1[1:]))


def test_kmeans_too_few_tags():
    with pytest.raises(ValueError):
        kmeans_tags(table([(0, "a", 1)], 1), k=2)


# --- item / user assignment ---------------------------------------------------------------

def model_for(assignment, k):
    return TagClusterModel(k, np.zeros((k, 1)), assignment, list(assignment), 0.0, [0.0], 1)


def test_assign_items_plain_tags():
    model = model_for({"a": 1, "b": 3, "c": 0}, 4)
    out = assign_items(model, table([(0, "a", 1), (0, "b", 1)], 1))
    assert out.tolist() == [[0, 1, 0, 1]]


@pytest.mark.parametrize("rels,member", [((0.5, 0.4), 1), ((0.3, 0.4), 0)])
def test_assign_items_genome_threshold(rels, member):
    model = model_for({"a": 2, "b": 2}, 3)
    out = assign_items(model, table([(0, "a", rels[0]), (0, "b", rels[1])], 1), relevance_threshold=0.4)
    assert out[0, 2] == member


def test_assign_items_untagged_item_zero_row():
    out = assign_items(model_for({"a": 0}, 2), table([(0, "a", 1)], 2))
    assert out[1].tolist() == [0, 0]


def test_assign_users_fraction_rule():
    # user 0: 4 items, two in c (0,1), one in d (2)
    inter = matrix_from_pairs([(0, 0), (0, 1), (0, 2), (0, 3)])
    clusters = np.array([[1, 0], [1, 0], [0, 1], [0, 0]])
    fm = assign_users(inter, clusters, 0.5)
    assert fm.memberships.tolist() == [[1, 0]]


def test_assign_users_all_items_one_cluster():
    inter = matrix_from_pairs([(0, 0), (0, 1)])
    fm = assign_users(inter, np.array([[0, 1, 1], [0, 1, 0]]), 0.5)
    assert fm.memberships.tolist() == [[0, 1, 1]]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_assign_users_single_tag_oracle(seed):
    rng = np.random.default_rng(seed)
    item_tag = rng.integers(0, 4, 15)
    pairs = [(u, i) for u in range(8) for i in range(15) if rng.random() < 0.4] + [(u, u) for u in range(8)]
    inter = matrix_from_pairs(pairs, 8, 15)
    fm = assign_users(inter, np.eye(4, dtype=int)[item_tag], 0.5)
    for u in range(8):
        items = inter.user_items(u)
        for c in range(4):
            assert fm.memberships[u, c] == int((item_tag[items] == c).sum() / len(items) >= 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_assign_users_monotone(seed):
    rng = np.random.default_rng(seed)
    clusters = (rng.random((12, 3)) < 0.4).astype(int)
    pairs = [(0, i) for i in range(12) if rng.random() < 0.5] + [(0, 0)]
    before = assign_users(matrix_from_pairs(pairs, 1, 12), clusters).memberships
    c = int(rng.integers(3))
    extra = [i for i in np.flatnonzero(clusters[:, c]) if (0, i) not in pairs]
    if not extra:
        return
    after = assign_users(matrix_from_pairs(pairs + [(0, extra[0])], 1, 12), clusters).memberships
    assert after[0, c] >= before[0, c]


# --- shelves ----------------------------------------------------------------------------

def test_shelf_factors_merge_drop_and_threshold():
    inter = matrix_from_pairs([(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (1, 3)])
    shelves = table([(0, "picture-book", 1), (1, "picturebooks", 1), (2, "picture-book", 1),
                     (3, "to-read", 1), (0, "fantasy", 1)], 4)
    mapping = {"picture-book": "picturebooks", "picturebooks": "picturebooks", "to-read": DROP,
               "fantasy": "fantasy"}
    fm = shelf_factors(mapping, inter, shelves)
    assert fm.labels == ["fantasy", "picturebooks"]
    assert fm.memberships.tolist() == [[0, 1], [0, 1]]


def test_shelf_factors_unmapped_listed():
    shelves = table([(0, "x", 1), (0, "y", 1)], 1)
    with pytest.raises(ValueError, match="unmapped shelf names: x, y"):
        shelf_factors({}, matrix_from_pairs([(0, 0)]), shelves)


# --- drop_degenerate / io -------------------------------------------------------------------

def test_drop_degenerate_counts():
    mem = np.array([[1, 0, 1, 1, 0], [1, 0, 0, 0, 1], [1, 0, 1, 0, 0]], dtype=np.int8)
    out = drop_degenerate(FactorMatrix(mem, list("abcde"), {}))
    assert out.K == 3 and out.labels == ["c", "d", "e"]


def test_drop_degenerate_identity():
    fm = FactorMatrix(np.array([[1, 0], [0, 1]], dtype=np.int8), ["a", "b"], {})
    assert drop_degenerate(fm).memberships.tolist() == fm.memberships.tolist()


def test_drop_degenerate_insufficient():
    fm = FactorMatrix(np.array([[1, 0, 1], [1, 0, 0]], dtype=np.int8), ["a", "b", "c"], {})
    with pytest.raises(InsufficientFactorsError, match="insufficient factors"):
        drop_degenerate(fm)


def test_factor_and_tag_files(tmp_path):
    fm = FactorMatrix(np.array([[1, 0], [0, 1], [1, 1]], dtype=np.int8), ["x", "y"], {"k": 2})
    back = load_factors(save_factors(fm, tmp_path / "f.csv"))
    assert back.labels == ["x", "y"] and np.array_equal(back.memberships, fm.memberships)
    assert back.provenance == {"k": 2}
    (tmp_path / "g.tsv").write_text("m1\tfunny\t0.9\nm9\tsad\t0.1\nm2\tsad\t0.5\n")
    tags = read_tag_file(tmp_path / "g.tsv", ["m1", "m2"], genome=True)
    assert tags.item_index.tolist() == [0, 1] and tags.relevance.tolist() == [0.9, 0.5]
