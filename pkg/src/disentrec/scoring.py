"""Score matrices with training-item exclusion and deterministic top-k."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp


@dataclass
class ScoreMatrix:
    """Lazily materialized user x item scores.

    ``score_fn`` maps an array of user indices to a dense block of scores.
    Items in ``exclude`` (usually the training interactions) never appear in
    a ranking.
    """

    score_fn: Callable[[np.ndarray], np.ndarray]
    n_users: int
    n_items: int
    exclude: sp.csr_matrix | None = None
    batch_size: int = 1024

    @classmethod
    def from_dense(cls, scores: np.ndarray, exclude=None) -> "ScoreMatrix":
        scores = np.asarray(scores, dtype=np.float64)
        return cls(lambda users: scores[users], scores.shape[0], scores.shape[1],
                   None if exclude is None else sp.csr_matrix(exclude))

    def block(self, users: np.ndarray) -> np.ndarray:
        """Scores for ``users`` with excluded items set to ``-inf``."""
        users = np.asarray(users, dtype=np.int64)
        s = np.array(self.score_fn(users), dtype=np.float64, copy=True)
        if not np.all(np.isfinite(s)):
            raise FloatingPointError("non-finite scores")
        if self.exclude is not None:
            ex = self.exclude[users]
            rows = np.repeat(np.arange(len(users)), np.diff(ex.indptr))
            s[rows, ex.indices] = -np.inf
        return s

    def dense(self) -> np.ndarray:
        return np.vstack([self.block(b) for b in self._batches(np.arange(self.n_users))])

    def _batches(self, users: np.ndarray):
        for start in range(0, len(users), self.batch_size):
            yield users[start:start + self.batch_size]

    def topk(self, k: int, users: np.ndarray | None = None) -> np.ndarray:
        """Top-``k`` item indices per user, score ties broken by ascending item index."""
        if users is None:
            users = np.arange(self.n_users)
        users = np.asarray(users, dtype=np.int64)
        k = min(k, self.n_items)
        out = np.empty((len(users), k), dtype=np.int64)
        pos = 0
        for batch in self._batches(users):
            s = self.block(batch)
            out[pos:pos + len(batch)] = topk_rows(s, k)
            pos += len(batch)
        return out


def topk_rows(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on negated scores keeps ascending index order among ties
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]
