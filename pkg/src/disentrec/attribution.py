"""Local LIME / KernelSHAP attributions of probes and the global JS interpretability score."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

RIDGE_EPS = 1e-8
EXHAUSTIVE_MAX_M = 12
DEFAULT_COALITIONS = 2048


@dataclass
class GlobalInterpScore:
    value: float
    method: str
    n_pairs: int
    flagged_columns: list[int] = field(default_factory=list)


def _predict(probe, X: np.ndarray) -> np.ndarray:
    return probe.predict_proba(X)


# --- LIME ------------------------------------------------------------------------------

def _background_stats(background: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    mean = background.mean(0)
    std = background.std(0)
    flat = std <= 0
    if flat.any():
        std = std.copy()
        std[flat] = 1e-3 * np.maximum(np.abs(mean[flat]), 1.0)
    return mean, std


def _lime_samples(background, n_samples: int, seed: int):
    mean, std = _background_stats(background)
    rng = np.random.default_rng(seed)
    scaled = rng.standard_normal((n_samples - 1, len(mean)))
    return mean, std, scaled


def _weighted_ridge(Xs: np.ndarray, y: np.ndarray, w: np.ndarray, alpha: float) -> np.ndarray:
    """Coefficients of a weighted ridge fit with an unpenalized intercept."""
    if np.ptp(y) == 0.0:
        return np.zeros(Xs.shape[1])
    sw = w.sum()
    xm = (w[:, None] * Xs).sum(0) / sw
    ym = float(w @ y) / sw
    Xc = Xs - xm
    yc = y - ym
    A = Xc.T @ (w[:, None] * Xc) + alpha * np.eye(Xs.shape[1])
    b = Xc.T @ (w * yc)
    return np.linalg.solve(A, b)


def lime_batch(probe, X, background, n_samples: int = 1000, seed: int = 0,
               kernel_width: float | None = None, alpha: float = 1.0) -> np.ndarray:
    """Absolute LIME surrogate coefficients for every row of ``X``.

    Perturbations are drawn once from a per-feature normal fit to
    ``background`` and shared across rows; each row additionally contributes
    itself as the first sample, as in tabular LIME.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    M = X.shape[1]
    mean, std, scaled = _lime_samples(background, n_samples, seed)
    width = kernel_width if kernel_width is not None else 0.75 * math.sqrt(M)
    shared_pred = _predict(probe, scaled * std + mean)
    x_scaled = (X - mean) / std
    x_pred = _predict(probe, X)
    out = np.empty_like(X)
    for r in range(X.shape[0]):
        Zs = np.vstack([x_scaled[r], scaled])
        y = np.concatenate([[x_pred[r]], shared_pred])
        d2 = ((Zs - x_scaled[r]) ** 2).sum(1)
        w = np.exp(-d2 / width ** 2)
        out[r] = np.abs(_weighted_ridge(Zs, y, w, alpha))
    return out


def lime_local(probe, x, background, n_samples: int = 1000, seed: int = 0,
               kernel_width: float | None = None, alpha: float = 1.0) -> np.ndarray:
    return lime_batch(probe, np.asarray(x)[None, :], background, n_samples, seed, kernel_width, alpha)[0]


# --- KernelSHAP ------------------------------------------------------------------------

def shapley_kernel_weight(M: int, s: int) -> float:
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def _coalitions(M: int, n_coalitions: int | None, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Coalition masks (excluding empty/full) and their regression weights."""
    if n_coalitions is None:
        n_coalitions = 2 ** M - 2 if M <= EXHAUSTIVE_MAX_M else DEFAULT_COALITIONS
    exhaustive = n_coalitions >= 2 ** M - 2
    if exhaustive:
        masks = np.array([[(c >> i) & 1 for i in range(M)] for c in range(1, 2 ** M - 1)], dtype=bool)
        sizes = masks.sum(1)
        w = np.array([shapley_kernel_weight(M, int(s)) for s in sizes])
        return masks, w
    rng = np.random.default_rng(seed)
    sizes = np.arange(1, M)
    p = np.array([(M - 1) / (s * (M - s)) for s in sizes])
    p /= p.sum()
    half = max(1, n_coalitions // 2)
    masks = np.zeros((2 * half, M), dtype=bool)
    for r in range(half):
        s = rng.choice(sizes, p=p)
        chosen = rng.choice(M, size=s, replace=False)
        masks[2 * r, chosen] = True
        masks[2 * r + 1] = ~masks[2 * r]
    return masks, np.full(len(masks), 1.0 / len(masks))


def _coalition_values(probe, X: np.ndarray, background: np.ndarray, masks: np.ndarray,
                      chunk_rows: int = 400_000) -> np.ndarray:
    """``v(S)`` for every row of ``X`` and coalition: mean prediction over background fills."""
    n, M = X.shape
    B = background.shape[0]
    C = masks.shape[0]
    out = np.empty((n, C))
    per_user = C * B
    users_per_chunk = max(1, chunk_rows // max(per_user, 1))
    for start in range(0, n, users_per_chunk):
        xs = X[start:start + users_per_chunk]
        filled = np.where(masks[None, :, None, :], xs[:, None, None, :], background[None, None, :, :])
        pred = _predict(probe, filled.reshape(-1, M)).reshape(len(xs), C, B)
        out[start:start + len(xs)] = pred.mean(2)
    return out


def _solve_constrained(masks: np.ndarray, w: np.ndarray, V: np.ndarray, v0: float,
                       vfull: np.ndarray) -> np.ndarray:
    """Weighted least squares per row of ``V`` under sum(phi) = vfull - v0."""
    Z = masks.astype(np.float64)
    total = vfull - v0
    Y = V.T - v0 - Z[:, -1:] * total[None, :]
    A = Z[:, :-1] - Z[:, -1:]
    AtW = A.T * w
    G = AtW @ A
    try:
        head = np.linalg.solve(G, AtW @ Y)
    except np.linalg.LinAlgError:
        head = np.linalg.solve(G + RIDGE_EPS * np.eye(G.shape[0]), AtW @ Y)
    return np.vstack([head, total - head.sum(0)]).T


def shap_batch(probe, X, background, n_coalitions: int | None = None, seed: int = 0,
               absolute: bool = True) -> np.ndarray:
    """KernelSHAP attributions (interventional, background-imputed) for each row of ``X``.

    All ``2^M - 2`` coalitions are used when ``n_coalitions`` is None or large
    enough; otherwise paired coalitions are sampled from the Shapley kernel.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] == 0:
        raise ValueError("background must be nonempty")
    M = X.shape[1]
    if M == 1:
        phi = (_predict(probe, X) - _predict(probe, background).mean())[:, None]
        return np.abs(phi) if absolute else phi
    masks, w = _coalitions(M, n_coalitions, seed)
    v = _coalition_values(probe, X, background, masks)
    v0 = float(_predict(probe, background).mean())
    vfull = _predict(probe, X)
    phi = _solve_constrained(masks, w, v, v0, vfull)
    return np.abs(phi) if absolute else phi


def shap_local(probe, x, background, n_coalitions: int | None = None, seed: int = 0,
               absolute: bool = True) -> np.ndarray:
    return shap_batch(probe, np.asarray(x)[None, :], background, n_coalitions, seed, absolute)[0]


# --- aggregation -----------------------------------------------------------------------

def build_attribution_matrix(suite, reps, method: str = "shap", budget: int | None = None,
                             seed: int = 0, n_users: int | None = None,
                             background_size: int = 20) -> np.ndarray:
    """M x K matrix; column j is the mean absolute attribution of probe j.

    ``n_users`` limits the evaluated users to a seeded subsample; the
    background is a seeded sample of ``background_size`` representations.
    """
    Z = np.asarray(getattr(reps, "values", reps), dtype=np.float64)
    rng = np.random.default_rng(seed)
    users = np.arange(Z.shape[0])
    if n_users is not None and n_users < len(users):
        users = np.sort(rng.choice(len(users), size=n_users, replace=False))
    bg_idx = np.sort(rng.choice(Z.shape[0], size=min(background_size, Z.shape[0]), replace=False))
    background = Z[bg_idx]
    X = Z[users]
    cols = []
    for probe in suite.probes:
        if method == "lime":
            att = lime_batch(probe, X, background, n_samples=budget or 1000, seed=seed)
        elif method == "shap":
            att = shap_batch(probe, X, background, n_coalitions=budget, seed=seed)
        else:
            raise ValueError(f"unknown attribution method {method!r}")
        cols.append(att.mean(0))
    return np.column_stack(cols)


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence of two distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)

    def kl(a, b):
        nz = a > 0
        return float((a[nz] * np.log2(a[nz] / b[nz])).sum())

    return min(max(0.5 * kl(p, m) + 0.5 * kl(q, m), 0.0), 1.0)


def global_score(S, method: str = "shap") -> GlobalInterpScore:
    """Mean pairwise JS divergence between the L1-normalized columns of ``S``."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] < 2:
        raise ValueError("attribution matrix needs K >= 2 columns")
    if not np.all(np.isfinite(S)) or (S < 0).any():
        raise ValueError("attribution matrix must be finite and nonnegative")
    mass = S.sum(0)
    flagged = [int(j) for j in np.flatnonzero(mass <= 0)]
    if flagged:
        logger.warning("zero-mass attribution columns %s treated as uniform", flagged)
    P = np.where(mass > 0, S / np.where(mass > 0, mass, 1.0), 1.0 / S.shape[0])
    pairs = list(itertools.combinations(range(S.shape[1]), 2))
    value = float(np.mean([js_divergence(P[:, a], P[:, b]) for a, b in pairs]))
    return GlobalInterpScore(value, method, len(pairs), flagged)
