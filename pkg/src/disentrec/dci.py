"""Disentanglement and completeness of an importance matrix (DCI framework)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoImportanceError(ValueError):
    pass


@dataclass
class DciScores:
    D: float
    C: float
    per_dim_D: np.ndarray
    per_factor_C: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def to_dict(self) -> dict:
        return {"D": self.D, "C": self.C, "per_dim_D": self.per_dim_D.tolist(),
                "per_factor_C": self.per_factor_C.tolist(),
                "alpha": self.alpha.tolist(), "beta": self.beta.tolist()}


def _check(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise ValueError("importance matrix must be 2-D (M x K)")
    if not np.all(np.isfinite(F)) or (F < 0).any():
        raise ValueError("importance matrix must be finite and nonnegative")
    if F.sum() <= 0:
        raise NoImportanceError("no importance mass")
    return F


def _normalized_entropy(P: np.ndarray, base: int) -> np.ndarray:
    """Row entropies of ``P`` in log base ``base`` with 0 log 0 = 0; zero rows give 0."""
    mass = P.sum(1, keepdims=True)
    Q = np.divide(P, mass, out=np.zeros_like(P), where=mass > 0)
    logs = np.log(Q, out=np.zeros_like(Q), where=Q > 0)
    return np.clip(-(Q * logs).sum(1) / np.log(base), 0.0, 1.0)


def disentanglement_terms(F) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension scores ``D_i`` and their weights ``alpha_i``.

    A zero row has entropy 0 (so ``D_i = 1``) and weight 0.
    """
    F = _check(F)
    if F.shape[1] < 2:
        raise ValueError("disentanglement needs K >= 2 factors")
    d = 1.0 - _normalized_entropy(F, F.shape[1])
    return d, F.sum(1) / F.sum()


def completeness_terms(F) -> tuple[np.ndarray, np.ndarray]:
    """Per-factor scores ``C_j`` and their weights ``beta_j``."""
    F = _check(F)
    if F.shape[0] < 2:
        raise ValueError("completeness needs M >= 2 dimensions")
    c = 1.0 - _normalized_entropy(F.T, F.shape[0])
    return c, F.sum(0) / F.sum()


def disentanglement(F) -> float:
    d, alpha = disentanglement_terms(F)
    return float(np.dot(alpha, d))


def completeness(F) -> float:
    c, beta = completeness_terms(F)
    return float(np.dot(beta, c))


def dci_scores(F) -> DciScores:
    d, alpha = disentanglement_terms(F)
    c, beta = completeness_terms(F)
    return DciScores(float(alpha @ d), float(beta @ c), d, c, alpha, beta)


def importance_from_suite(suite) -> np.ndarray:
    """Stack the probes' importance vectors as columns of an M x K matrix."""
    return np.column_stack([p.importances for p in suite.probes])
