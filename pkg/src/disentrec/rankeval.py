"""Top-k ranking metrics: NDCG, Recall, MRR and catalog Coverage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dataio import InteractionMatrix
from .scoring import ScoreMatrix

DEFAULT_CUTOFFS = (10, 50, 100)
METRICS = ("ndcg", "recall", "mrr", "coverage")


@dataclass
class EvalResult:
    scores: dict[str, float]
    n_users_evaluated: int
    n_users_skipped: int
    cutoffs: list[int] = field(default_factory=lambda: list(DEFAULT_CUTOFFS))

    def __getitem__(self, key: str) -> float:
        return self.scores[key]

    def to_dict(self) -> dict:
        return {"scores": dict(self.scores), "n_users_evaluated": self.n_users_evaluated,
                "n_users_skipped": self.n_users_skipped, "cutoffs": list(self.cutoffs)}


def _as_scores(scores) -> ScoreMatrix:
    return scores if isinstance(scores, ScoreMatrix) else ScoreMatrix.from_dense(scores)


def _heldout_csr(heldout) -> sp.csr_matrix:
    m = heldout.matrix if isinstance(heldout, InteractionMatrix) else sp.csr_matrix(heldout)
    return m.tocsr()


def _hits(scores, heldout, k: int):
    """Binary hit matrix of the top-k lists for users with held-out items."""
    sm = _as_scores(scores)
    H = _heldout_csr(heldout)
    n_rel = np.diff(H.indptr)
    users = np.flatnonzero(n_rel > 0)
    top = sm.topk(k, users)
    hits = np.zeros(top.shape, dtype=bool)
    for r, u in enumerate(users):
        rel = H.indices[H.indptr[u]:H.indptr[u + 1]]
        hits[r] = np.isin(top[r], rel)
    return hits, n_rel[users], top, sm.n_items


def _discounts(k: int) -> list[float]:
    return [1.0 / math.log2(p + 2) for p in range(k)]


def _ndcg(hits: np.ndarray, n_rel: np.ndarray, k: int) -> np.ndarray:
    # correctly rounded sums make the result independent of summation order
    disc = _discounts(k)
    out = np.empty(len(n_rel))
    for r in range(len(n_rel)):
        pos = np.flatnonzero(hits[r, :k])
        dcg = math.fsum(disc[p] for p in pos)
        out[r] = dcg / math.fsum(disc[:min(int(n_rel[r]), k)])
    return out


def _recall(hits, n_rel, k):
    return hits[:, :k].sum(1) / np.minimum(n_rel, k)


def _mrr(hits, n_rel, k):
    h = hits[:, :k]
    first = h.argmax(1)
    return np.where(h.any(1), 1.0 / (first + 1), 0.0)


def _mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / len(values) if len(values) else 0.0


def _coverage(top, n_items, k):
    return np.unique(top[:, :k]).size / n_items


def ndcg_at_k(scores, heldout, k: int) -> float:
    hits, n_rel, _, _ = _hits(scores, heldout, k)
    return _mean(_ndcg(hits, n_rel, k))


def recall_at_k(scores, heldout, k: int) -> float:
    hits, n_rel, _, _ = _hits(scores, heldout, k)
    return _mean(_recall(hits, n_rel, k))


def mrr_at_k(scores, heldout, k: int) -> float:
    hits, n_rel, _, _ = _hits(scores, heldout, k)
    return _mean(_mrr(hits, n_rel, k))


def coverage_at_k(scores, heldout, k: int) -> float:
    _, _, top, n_items = _hits(scores, heldout, k)
    return _coverage(top, n_items, k)


def evaluate(scores, heldout, cutoffs=DEFAULT_CUTOFFS) -> EvalResult:
    """All four metrics at every cutoff from a single top-max(k) ranking pass."""
    cutoffs = sorted(int(c) for c in cutoffs)
    kmax = max(cutoffs)
    hits, n_rel, top, n_items = _hits(scores, heldout, kmax)
    H = _heldout_csr(heldout)
    out: dict[str, float] = {}
    for k in cutoffs:
        if len(n_rel):
            out[f"ndcg@{k}"] = _mean(_ndcg(hits, n_rel, k))
            out[f"recall@{k}"] = _mean(_recall(hits, n_rel, k))
            out[f"mrr@{k}"] = _mean(_mrr(hits, n_rel, k))
        else:
            out[f"ndcg@{k}"] = out[f"recall@{k}"] = out[f"mrr@{k}"] = 0.0
        out[f"coverage@{k}"] = _coverage(top, n_items, k)
    return EvalResult(out, len(n_rel), H.shape[0] - len(n_rel), cutoffs)
