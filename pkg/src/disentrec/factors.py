"""Ground-truth factors of variation from item tags, tag clusters and shelves."""

from __future__ import annotations

import csv
import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataio import InteractionMatrix

DROP = "DROP"


class InsufficientFactorsError(ValueError):
    pass


@dataclass(frozen=True)
class TagTable:
    """Rows of (item_index, tag_id, relevance) over a catalog of ``n_items``."""

    item_index: np.ndarray
    tag_id: tuple[str, ...]
    relevance: np.ndarray
    n_items: int

    def __post_init__(self):
        if not (len(self.item_index) == len(self.tag_id) == len(self.relevance)):
            raise ValueError("ragged tag table")
        if len(self.item_index) and (self.item_index.min() < 0 or self.item_index.max() >= self.n_items):
            raise ValueError("item index out of range")
        rel = self.relevance
        if len(rel) and (not np.all(np.isfinite(rel)) or rel.min() < 0 or rel.max() > 1):
            raise ValueError("relevance must be finite and in [0, 1]")

    @classmethod
    def from_rows(cls, rows: Sequence[tuple], n_items: int) -> "TagTable":
        items = np.array([r[0] for r in rows], dtype=np.int64)
        tags = tuple(str(r[1]) for r in rows)
        rel = np.array([r[2] if len(r) > 2 else 1.0 for r in rows], dtype=np.float64)
        return cls(items, tags, rel, n_items)

    def __len__(self):
        return len(self.tag_id)

    def distinct_tags(self) -> list[str]:
        return sorted(set(self.tag_id))

    def subset(self, mask: np.ndarray) -> "TagTable":
        mask = np.asarray(mask, dtype=bool)
        return TagTable(self.item_index[mask], tuple(t for t, m in zip(self.tag_id, mask) if m),
                        self.relevance[mask], self.n_items)


@dataclass
class TagClusterModel:
    k: int
    centroids: np.ndarray
    tag_assignment: dict[str, int]
    kept_tags: list[str]
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0


@dataclass
class FactorMatrix:
    memberships: np.ndarray
    labels: list[str]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.memberships = np.asarray(self.memberships, dtype=np.int8)
        if self.memberships.ndim != 2 or self.memberships.shape[1] != len(self.labels):
            raise ValueError("memberships must be n_users x K with one label per column")
        if not np.isin(self.memberships, (0, 1)).all():
            raise ValueError("memberships must be binary")

    @property
    def n_users(self) -> int:
        return self.memberships.shape[0]

    @property
    def K(self) -> int:
        return self.memberships.shape[1]


def read_tag_file(path, item_ids: Sequence[str], genome: bool = False) -> TagTable:
    """Read ``item_id<TAB>tag[<TAB>relevance]``; items outside ``item_ids`` are skipped."""
    index = {iid: i for i, iid in enumerate(item_ids)}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not fields:
                continue
            if len(fields) < (3 if genome else 2):
                raise ValueError(f"{path}: line {lineno}: too few columns")
            if fields[0] not in index:
                continue
            rel = float(fields[2]) if genome else 1.0
            rows.append((index[fields[0]], fields[1], rel))
    return TagTable.from_rows(rows, len(item_ids))


def top_tags(tags: TagTable, n: int = 100, by: str = "items") -> TagTable:
    """Keep rows of the ``n`` most popular tags.

    Popularity is the number of distinct tagged items (``by="items"``) or the
    total relevance mass (``by="relevance"``, useful for dense genome scores).
    Ties are broken by tag id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    score: dict[str, float] = defaultdict(float)
    if by == "items":
        seen = set()
        for item, tag in zip(tags.item_index.tolist(), tags.tag_id):
            if (item, tag) not in seen:
                seen.add((item, tag))
                score[tag] += 1
    elif by == "relevance":
        for tag, rel in zip(tags.tag_id, tags.relevance.tolist()):
            score[tag] += rel
    else:
        raise ValueError(f"unknown popularity measure {by!r}")
    if len(score) < n:
        warnings.warn(f"only {len(score)} distinct tags, fewer than requested {n}; keeping all")
    ranked = sorted(score, key=lambda t: (-score[t], t))[:n]
    keep = set(ranked)
    return tags.subset(np.array([t in keep for t in tags.tag_id], dtype=bool))


def tag_vectors(tags: TagTable, normalize: bool = False) -> tuple[list[str], np.ndarray]:
    """Each tag as a relevance-weighted indicator vector over items."""
    names = tags.distinct_tags()
    pos = {t: j for j, t in enumerate(names)}
    X = np.zeros((len(names), tags.n_items))
    for item, tag, rel in zip(tags.item_index.tolist(), tags.tag_id, tags.relevance.tolist()):
        X[pos[tag], item] = max(X[pos[tag], item], rel)
    if normalize:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        X = X / np.where(norms > 0, norms, 1.0)
    return names, X


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a centre
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[idx:idx + 1])[:, 0])
    return X[chosen].copy()


def kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6):
    """Lloyd's algorithm from k-means++ seeds.

    Returns ``(centroids, labels, inertia_history)``. Stops when assignments
    are stable, the relative inertia change drops below ``tol`` or after
    ``max_iter`` iterations. An emptied cluster is re-seeded at the point
    farthest from its current centre.
    """
    X = np.asarray(X, dtype=np.float64)
    if k < 1 or k > X.shape[0]:
        raise ValueError(f"k={k} must be in [1, {X.shape[0]}]")
    rng = np.random.default_rng(seed)
    C = kmeans_plusplus(X, k, rng)
    labels = np.full(X.shape[0], -1)
    history: list[float] = []
    for _ in range(max_iter):
        d = _sq_dists(X, C)
        new_labels = d.argmin(1)
        inertia = float(d[np.arange(len(X)), new_labels].sum())
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if history and stable:
            break
        if history and abs(history[-1] - inertia) <= tol * max(history[-1], 1e-300):
            history.append(inertia)
            break
        history.append(inertia)
        for c in range(k):
            members = labels == c
            if members.any():
                C[c] = X[members].mean(0)
            else:
                far = int(d[np.arange(len(X)), labels].argmax())
                C[c] = X[far]
                labels[far] = c
                d[far] = 0.0
    d = _sq_dists(X, C)
    labels = d.argmin(1)
    final = float(d[np.arange(len(X)), labels].sum())
    if not history or final < history[-1]:
        history.append(final)
    return C, labels, history


def kmeans_tags(tags: TagTable, k: int = 20, seed: int = 0, max_iter: int = 300,
                normalize: bool = False, tol: float = 1e-6) -> TagClusterModel:
    names, X = tag_vectors(tags, normalize=normalize)
    if len(names) < k:
        raise ValueError(f"{len(names)} distinct tags, fewer than k={k}")
    C, labels, history = kmeans(X, k, seed=seed, max_iter=max_iter, tol=tol)
    return TagClusterModel(
        k=k,
        centroids=C,
        tag_assignment={t: int(c) for t, c in zip(names, labels)},
        kept_tags=names,
        inertia=history[-1],
        inertia_history=history,
        n_iter=len(history),
    )


def assign_items(model: TagClusterModel, tags: TagTable, relevance_threshold: float = 0.0) -> np.ndarray:
    """Binary item x k membership.

    An item joins cluster ``c`` when it carries a kept tag in ``c`` and the mean
    relevance of those tags exceeds ``relevance_threshold``.
    """
    if not 0.0 <= relevance_threshold <= 1.0:
        raise ValueError("relevance_threshold must lie in [0, 1]")
    total = np.zeros((tags.n_items, model.k))
    count = np.zeros((tags.n_items, model.k))
    for item, tag, rel in zip(tags.item_index.tolist(), tags.tag_id, tags.relevance.tolist()):
        c = model.tag_assignment.get(tag)
        if c is None:
            continue
        total[item, c] += rel
        count[item, c] += 1
    mean = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return ((count > 0) & (mean > relevance_threshold)).astype(np.int8)


def assign_users(interactions: InteractionMatrix, item_clusters: np.ndarray, fraction: float = 0.5,
                 labels: Sequence[str] | None = None, tagged_only: bool = False) -> FactorMatrix:
    """User ``u`` holds factor ``c`` iff at least ``fraction`` of its items are in ``c``.

    The denominator counts all of the user's items, or only items that belong
    to some cluster when ``tagged_only`` is set.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    item_clusters = np.asarray(item_clusters, dtype=np.float64)
    X = interactions.matrix
    in_cluster = np.asarray(X @ item_clusters)
    if tagged_only:
        denom = np.asarray(X @ (item_clusters.sum(1) > 0).astype(np.float64)).ravel()
    else:
        denom = np.asarray(X.sum(1)).ravel()
    assert (np.asarray(X.sum(1)).ravel() > 0).all(), "user without interactions"
    share = in_cluster / np.where(denom > 0, denom, 1.0)[:, None]
    member = (share >= fraction - 1e-12) & (denom[:, None] > 0)
    k = item_clusters.shape[1]
    return FactorMatrix(
        member.astype(np.int8),
        list(labels) if labels is not None else [f"cluster_{c}" for c in range(k)],
        {"fraction": fraction, "tagged_only": tagged_only},
    )


def read_shelf_map(path) -> dict[str, str]:
    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not fields:
                continue
            if len(fields) != 2:
                raise ValueError(f"{path}: line {lineno}: expected raw_name<TAB>canonical|DROP")
            mapping[fields[0].strip()] = fields[1].strip()
    return mapping


def shelf_factors(shelf_map: Mapping[str, str] | str | Path, interactions: InteractionMatrix,
                  shelves: TagTable, fraction: float = 0.5) -> FactorMatrix:
    """Factors from book shelves after applying a reviewed merge/drop mapping."""
    if not isinstance(shelf_map, Mapping):
        shelf_map = read_shelf_map(shelf_map)
    unmapped = sorted(set(shelves.tag_id) - set(shelf_map))
    if unmapped:
        raise ValueError(f"unmapped shelf names: {', '.join(unmapped)}")
    canonical = sorted({v for v in shelf_map.values() if v != DROP})
    pos = {name: j for j, name in enumerate(canonical)}
    item_shelves = np.zeros((shelves.n_items, len(canonical)), dtype=np.int8)
    for item, raw in zip(shelves.item_index.tolist(), shelves.tag_id):
        target = shelf_map[raw]
        if target != DROP:
            item_shelves[item, pos[target]] = 1
    fm = assign_users(interactions, item_shelves, fraction, labels=canonical)
    fm.provenance["shelf_map_size"] = len(shelf_map)
    return fm


def drop_degenerate(factors: FactorMatrix) -> FactorMatrix:
    """Remove constant factor columns; at least two factors must remain."""
    col = factors.memberships.sum(0)
    keep = (col > 0) & (col < factors.n_users)
    if keep.sum() < 2:
        raise InsufficientFactorsError(f"insufficient factors: {int(keep.sum())} non-degenerate")
    prov = dict(factors.provenance, dropped=[l for l, k in zip(factors.labels, keep) if not k])
    return FactorMatrix(factors.memberships[:, keep], [l for l, k in zip(factors.labels, keep) if k], prov)


def save_factors(factors: FactorMatrix, path) -> Path:
    """CSV with the factor labels as header plus a ``.json`` provenance sidecar."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(factors.labels)
        w.writerows(factors.memberships.tolist())
    path.with_name(path.name + ".json").write_text(json.dumps(factors.provenance, indent=1, sort_keys=True))
    return path


def load_factors(path) -> FactorMatrix:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    labels, body = rows[0], rows[1:]
    mem = np.array([[int(v) for v in r] for r in body], dtype=np.int8).reshape(len(body), len(labels))
    side = path.with_name(path.name + ".json")
    prov = json.loads(side.read_text()) if side.exists() else {}
    return FactorMatrix(mem, labels, prov)
