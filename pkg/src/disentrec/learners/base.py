"""Shared learner configuration, representation container, optimizer and training loop."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..dataio import InteractionMatrix
from ..scoring import ScoreMatrix

logger = logging.getLogger(__name__)

MODELS = ("top_popular", "pure_svd", "multi_dae", "multi_vae", "beta_vae", "macrid_vae")
BATCH_SIZES = (128, 256, 512, 1024)
CHECKPOINT_MAGIC = b"DRCKPT\x00\x01"


class ConfigError(ValueError):
    pass


class DivergedError(RuntimeError):
    pass


class NotFittedError(RuntimeError):
    pass


@dataclass
class LearnerConfig:
    model: str
    latent_dim: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 100
    beta: float = 0.2
    macro_k: int = 2
    dropout_keep: float = 0.5
    seed: int = 0
    patience: int = 10
    eval_every: int = 5
    hidden_dim: int = 600
    anneal_fraction: float = 0.2
    weight_decay: float = 0.0
    temperature: float = 0.1
    prior_std: float = 0.075
    prototype_steps: int = 1
    strict_ranges: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.strict_ranges:
            if not 2 <= self.latent_dim <= 20:
                raise ConfigError("latent_dim must lie in [2, 20]")
            if self.batch_size not in BATCH_SIZES:
                raise ConfigError(f"batch_size must be one of {BATCH_SIZES}")
            if self.max_epochs > 500:
                raise ConfigError("max_epochs must be <= 500")
        if self.latent_dim < 1 or self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigError("latent_dim, batch_size must be positive")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError("dropout_keep must lie in (0, 1]")
        if self.model == "beta_vae" and not self.beta > 1.0:
            raise ConfigError("beta_vae requires beta > 1")
        if self.model == "macrid_vae":
            if self.macro_k < 2:
                raise ConfigError("macro_k must be >= 2")
            if self.latent_dim % self.macro_k:
                raise ConfigError(f"macro_k={self.macro_k} does not divide latent_dim={self.latent_dim}")
        if self.prototype_steps < 0:
            raise ConfigError("prototype_steps must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class RepresentationMatrix:
    values: np.ndarray
    model_tag: str
    seed: int
    concept_blocks: list[list[int]] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("representation must be n_users x M")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("representation contains non-finite values")

    @property
    def n_users(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def save_csv(self, path) -> Path:
        path = Path(path)
        header = ",".join(f"z{i}" for i in range(self.M))
        np.savetxt(path, self.values, delimiter=",", header=header, comments="", fmt="%.17g")
        meta = {"model_tag": self.model_tag, "seed": self.seed, "concept_blocks": self.concept_blocks}
        path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=1))
        return path

    @classmethod
    def load_csv(cls, path) -> "RepresentationMatrix":
        path = Path(path)
        values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        side = path.with_name(path.name + ".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        return cls(values, meta.get("model_tag", ""), meta.get("seed", 0), meta.get("concept_blocks"))


class Adam:
    """Adam update over a dict of parameter arrays (in place)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def l2_normalize(x: np.ndarray, delta: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``x / sqrt(|x|^2 + delta)``; returns the result and the norms."""
    n = np.sqrt((x * x).sum(-1, keepdims=True) + delta)
    return x / n, n


def l2_normalize_backward(y: np.ndarray, n: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return (dy - y * (y * dy).sum(-1, keepdims=True)) / n


def dense_rows(m: sp.csr_matrix, rows: np.ndarray, dtype=np.float64) -> np.ndarray:
    return m[rows].toarray().astype(dtype)


class NeuralRecommender:
    """Base for the autoencoder family: parameters + forward/backward + training loop.

    Subclasses implement ``init_params``, ``loss_and_grads``, ``encode_rows``
    and ``score_rows``.
    """

    def __init__(self, config: LearnerConfig):
        self.config = config
        self.params: dict[str, np.ndarray] | None = None
        self.n_items: int | None = None
        self.history: list[dict] = []
        self.best_epoch: int | None = None

    # subclass hooks ---------------------------------------------------------------------
    def init_params(self, n_items: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def sample_noise(self, batch: int, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def loss_and_grads(self, params, x, noise, beta, train=True):
        raise NotImplementedError

    def encode_rows(self, params, x) -> np.ndarray:
        raise NotImplementedError

    def score_rows(self, params, x) -> np.ndarray:
        raise NotImplementedError

    def beta_at(self, epoch: int, step: int, steps_per_epoch: int) -> float:
        return self.config.beta

    def end_epoch(self, params, rng: np.random.Generator) -> None:
        """Called after every epoch's updates; may modify ``params`` in place."""

    # training -------------------------------------------------------------------------
    def _check_fitted(self):
        if self.params is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted")

    def fit(self, train: InteractionMatrix, validation: InteractionMatrix | None = None,
            evaluate: Callable | None = None) -> "NeuralRecommender":
        """Minibatch Adam training with best-checkpoint early stopping on validation NDCG@100."""
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        X = train.matrix.tocsr()
        self.n_items = X.shape[1]
        params = self.init_params(self.n_items, rng)
        opt = Adam(params, cfg.learning_rate)
        n = X.shape[0]
        steps = max(1, int(np.ceil(n / cfg.batch_size)))
        best_score, best_params, bad = -np.inf, None, 0
        if evaluate is None and validation is not None:
            from ..rankeval import ndcg_at_k

            def evaluate(model):
                return ndcg_at_k(model.scores(train), validation, 100)

        self.history = []
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n)
            total = 0.0
            for s in range(steps):
                rows = order[s * cfg.batch_size:(s + 1) * cfg.batch_size]
                x = dense_rows(X, rows)
                noise = self.sample_noise(len(rows), rng)
                beta = self.beta_at(epoch, s, steps)
                loss, grads = self.loss_and_grads(params, x, noise, beta)
                if not np.isfinite(loss):
                    raise DivergedError(f"diverged: non-finite loss at epoch {epoch}")
                if cfg.weight_decay:
                    for k in grads:
                        if k.startswith("W"):
                            grads[k] = grads[k] + cfg.weight_decay * params[k]
                opt.step(params, grads)
                total += loss * len(rows)
            self.end_epoch(params, rng)
            entry = {"epoch": epoch, "loss": total / n}
            if evaluate is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs):
                self.params = params
                score = float(evaluate(self))
                entry["val_ndcg@100"] = score
                if score > best_score:
                    best_score, best_params, bad = score, {k: v.copy() for k, v in params.items()}, 0
                    self.best_epoch = epoch
                else:
                    bad += 1
            self.history.append(entry)
            if evaluate is not None and bad >= cfg.patience:
                break
        self.params = best_params if best_params is not None else params
        if best_params is None:
            self.best_epoch = cfg.max_epochs
        return self

    # inference ------------------------------------------------------------------------
    def encode(self, interactions: InteractionMatrix, batch: int = 1024) -> RepresentationMatrix:
        self._check_fitted()
        X = interactions.matrix.tocsr()
        out = [self.encode_rows(self.params, dense_rows(X, np.arange(s, min(s + batch, X.shape[0]))))
               for s in range(0, X.shape[0], batch)]
        values = np.vstack(out) if out else np.zeros((0, self.config.latent_dim))
        return RepresentationMatrix(values, self.config.model, self.config.seed, self.concept_blocks())

    def concept_blocks(self):
        return None

    def scores(self, history: InteractionMatrix, exclude: sp.csr_matrix | None = None) -> ScoreMatrix:
        """Scores from each user's ``history`` row; history items are excluded unless overridden."""
        self._check_fitted()
        X = history.matrix.tocsr()
        params = self.params

        def fn(users):
            return self.score_rows(params, dense_rows(X, users))

        return ScoreMatrix(fn, X.shape[0], X.shape[1], X if exclude is None else exclude)

    # persistence ----------------------------------------------------------------------
    def save(self, path) -> Path:
        self._check_fitted()
        save_checkpoint(path, self.params, self.config)
        return Path(path)

    @classmethod
    def load(cls, path):
        params, config = load_checkpoint(path)
        model = cls(config)
        model.params = params
        model.n_items = (params["E"] if "E" in params else params["b_d2"]).shape[0]
        return model


def save_checkpoint(path, params: dict[str, np.ndarray], config: LearnerConfig) -> None:
    """Binary tensors (magic, count, then name/shape/float64 data per tensor) + JSON config."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            raw_name = name.encode()
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())
    path.with_name(path.name + ".json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], LearnerConfig]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint")
    off = 8
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    params = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + ln].decode()
        off += ln
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
    config = LearnerConfig.from_dict(json.loads(path.with_name(path.name + ".json").read_text()))
    return params, config
