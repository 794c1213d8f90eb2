"""Synthetic interaction data with planted binary factors and controllable entanglement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import InteractionMatrix, _build_csr
from .factors import FactorMatrix
from .learners.base import RepresentationMatrix


@dataclass
class SynthSpec:
    n_users: int = 1000
    n_items: int = 500
    K: int = 6
    M: int = 6
    noise_sigma: float = 0.05
    mixing: np.ndarray | None = None
    items_per_factor: int = 50
    interactions_per_user: int = 20
    factor_rate: float = 0.3
    off_factor_share: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.K > self.M:
            raise ValueError("K must not exceed M")
        if self.K * self.items_per_factor > self.n_items:
            raise ValueError("not enough items for items_per_factor")
        if self.mixing is None:
            self.mixing = np.eye(self.M)
        self.mixing = np.asarray(self.mixing, dtype=np.float64)
        if self.mixing.shape != (self.M, self.M):
            raise ValueError("mixing must be M x M")
        if abs(np.linalg.det(self.mixing)) < 1e-12:
            raise ValueError("mixing must be invertible")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def random_orthogonal(M: int, seed: int = 0) -> np.ndarray:
    """Haar-distributed orthogonal matrix."""
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((M, M)))
    return Q * np.sign(np.diag(R))


def generate(spec: SynthSpec) -> tuple[InteractionMatrix, FactorMatrix, RepresentationMatrix]:
    """Sample users' factors, their interactions and a mixed noisy representation."""
    rng = np.random.default_rng(spec.seed)
    n, K = spec.n_users, spec.K
    F = rng.random((n, K)) < spec.factor_rate
    empty = ~F.any(1)
    while empty.any():
        F[empty] = rng.random((int(empty.sum()), K)) < spec.factor_rate
        empty = ~F.any(1)

    item_factor = np.full(spec.n_items, -1)
    item_factor[: K * spec.items_per_factor] = np.arange(K * spec.items_per_factor) % K

    rows, cols = [], []
    for u in range(n):
        on = np.flatnonzero(np.isin(item_factor, np.flatnonzero(F[u])))
        off = np.setdiff1d(np.arange(spec.n_items), on)
        total = min(spec.interactions_per_user, spec.n_items)
        n_off = min(int(round(spec.off_factor_share * total)), len(off))
        n_on = min(total - n_off, len(on))
        chosen = np.concatenate([rng.choice(on, n_on, replace=False),
                                 rng.choice(off, n_off, replace=False)])
        rows.extend([u] * len(chosen))
        cols.extend(chosen.tolist())
    inter = InteractionMatrix(
        _build_csr(rows, cols, n, spec.n_items),
        tuple(f"u{u}" for u in range(n)),
        tuple(f"i{i}" for i in range(spec.n_items)),
        {"synth": {"seed": spec.seed, "K": K, "M": spec.M, "noise_sigma": spec.noise_sigma}},
    )
    factors = FactorMatrix(F.astype(np.int8), [f"factor_{j}" for j in range(K)], {"synth_seed": spec.seed})
    padded = np.zeros((n, spec.M))
    padded[:, :K] = F
    Z = padded @ spec.mixing.T + spec.noise_sigma * rng.standard_normal((n, spec.M))
    return inter, factors, RepresentationMatrix(Z, "synth", spec.seed)
