"""Non-neural baselines: Top-Popular and PureSVD."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..dataio import InteractionMatrix
from ..scoring import ScoreMatrix
from .base import LearnerConfig, NotFittedError, RepresentationMatrix, load_checkpoint, save_checkpoint


class NoRepresentationError(TypeError):
    pass


class TopPopular:
    """Every user receives the item interaction counts as scores."""

    def __init__(self, config: LearnerConfig | None = None):
        self.config = config or LearnerConfig("top_popular")
        self.counts: np.ndarray | None = None

    def fit(self, train: InteractionMatrix, validation=None) -> "TopPopular":
        if train.nnz == 0:
            raise ValueError("empty training matrix")
        self.counts = train.item_counts().astype(np.float64)
        return self

    def scores(self, history: InteractionMatrix, exclude=None) -> ScoreMatrix:
        if self.counts is None:
            raise NotFittedError("TopPopular is not fitted")
        counts = self.counts
        X = history.matrix.tocsr()
        return ScoreMatrix(lambda users: np.broadcast_to(counts, (len(users), len(counts))),
                           X.shape[0], X.shape[1], X if exclude is None else exclude)

    def encode(self, interactions):
        raise NoRepresentationError("Top-Popular learns no user representation")


def randomized_svd(X, rank: int, n_oversamples: int = 10, n_iter: int = 7, seed: int = 0):
    """Truncated SVD by randomized range finding with power iterations.

    Returns ``(U, s, Vt)`` with singular values in decreasing order and a
    sign convention making the largest-magnitude entry of each ``Vt`` row positive.
    """
    n, m = X.shape
    rank = int(rank)
    if rank < 1 or rank > min(n, m):
        raise ValueError(f"rank {rank} outside [1, {min(n, m)}]")
    rng = np.random.default_rng(seed)
    width = min(rank + n_oversamples, min(n, m))
    Q = np.asarray(X @ rng.standard_normal((m, width)))
    Q, _ = np.linalg.qr(Q)
    for _ in range(n_iter):
        Q, _ = np.linalg.qr(np.asarray(X.T @ Q))
        Q, _ = np.linalg.qr(np.asarray(X @ Q))
    Bm = np.asarray((X.T @ Q).T)
    Ub, s, Vt = np.linalg.svd(Bm, full_matrices=False)
    U = Q @ Ub
    U, s, Vt = U[:, :rank], s[:rank], Vt[:rank]
    signs = np.sign(Vt[np.arange(rank), np.abs(Vt).argmax(1)])
    signs[signs == 0] = 1.0
    return U * signs, s, Vt * signs[:, None]


class PureSVD:
    """Rank-M truncated SVD of the binary training matrix.

    User representation is ``U * s``; scores fold a history row in as
    ``x V V^T`` which equals ``U S V^T`` on training rows.
    """

    def __init__(self, config: LearnerConfig):
        self.config = config
        self.V: np.ndarray | None = None
        self.s: np.ndarray | None = None
        self.train_repr: np.ndarray | None = None

    def fit(self, train: InteractionMatrix, validation=None) -> "PureSVD":
        X = train.matrix.astype(np.float64)
        U, s, Vt = randomized_svd(X, self.config.latent_dim, seed=self.config.seed)
        residual = sp.linalg.norm(X) ** 2 - float((s ** 2).sum())
        if not np.all(np.isfinite(s)) or residual < -1e-6 * max(1.0, sp.linalg.norm(X) ** 2):
            raise ArithmeticError(f"SVD did not converge (residual energy {residual:.3g})")
        self.V, self.s = Vt.T, s
        self.train_repr = U * s
        return self

    def _check(self):
        if self.V is None:
            raise NotFittedError("PureSVD is not fitted")

    def encode(self, interactions: InteractionMatrix) -> RepresentationMatrix:
        self._check()
        Z = np.asarray(interactions.matrix.astype(np.float64) @ self.V)
        return RepresentationMatrix(Z, "pure_svd", self.config.seed)

    def scores(self, history: InteractionMatrix, exclude=None) -> ScoreMatrix:
        self._check()
        X = history.matrix.tocsr().astype(np.float64)
        V = self.V
        return ScoreMatrix(lambda users: np.asarray(X[users] @ V) @ V.T, X.shape[0], X.shape[1],
                           history.matrix.tocsr() if exclude is None else exclude)

    def save(self, path):
        self._check()
        save_checkpoint(path, {"V": self.V, "s": self.s}, self.config)

    @classmethod
    def load(cls, path) -> "PureSVD":
        params, config = load_checkpoint(path)
        model = cls(config)
        model.V, model.s = params["V"], params["s"]
        return model
