"""Multinomial denoising and variational autoencoders (MultiDAE, MultiVAE, beta-VAE).

Backward passes are written by hand for the fixed one-hidden-layer
encoder/decoder; ``tests/test_learners.py`` checks them against central
finite differences.
"""

from __future__ import annotations

import numpy as np

from .base import LearnerConfig, NeuralRecommender, l2_normalize


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _log_softmax(logits):
    shift = logits - logits.max(1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(1, keepdims=True))


def multinomial_nll(logits: np.ndarray, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch-mean negative multinomial log-likelihood and its gradient w.r.t. logits."""
    B = x.shape[0]
    logsm = _log_softmax(logits)
    nll = -float((logsm * x).sum()) / B
    dlogits = (np.exp(logsm) * x.sum(1, keepdims=True) - x) / B
    return nll, dlogits


def gaussian_kl(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Batch-mean KL(N(mu, exp(logvar)) || N(0, I))."""
    return float(0.5 * (-logvar + np.exp(logvar) + mu * mu - 1.0).sum()) / mu.shape[0]


class _AutoEncoder(NeuralRecommender):
    variational = False

    def init_params(self, n_items, rng):
        H, M = self.config.hidden_dim, self.config.latent_dim
        out = 2 * M if self.variational else M
        return {
            "W_e1": _glorot(rng, n_items, H), "b_e1": rng.normal(0, 1e-3, H),
            "W_e2": _glorot(rng, H, out), "b_e2": rng.normal(0, 1e-3, out),
            "W_d1": _glorot(rng, M, H), "b_d1": rng.normal(0, 1e-3, H),
            "W_d2": _glorot(rng, H, n_items), "b_d2": rng.normal(0, 1e-3, n_items),
        }

    def sample_noise(self, batch, rng):
        keep = self.config.dropout_keep
        noise = {"dropout": None, "eps": None}
        if keep < 1.0:
            noise["dropout"] = (rng.random((batch, self.n_items)) < keep) / keep
        if self.variational:
            noise["eps"] = rng.standard_normal((batch, self.config.latent_dim))
        return noise

    def _encode_hidden(self, p, x, dropout):
        xn, _ = l2_normalize(x)
        xin = xn if dropout is None else xn * dropout
        h1 = np.tanh(xin @ p["W_e1"] + p["b_e1"])
        return xin, h1, h1 @ p["W_e2"] + p["b_e2"]

    def _decode(self, p, z):
        h3 = np.tanh(z @ p["W_d1"] + p["b_d1"])
        return h3, h3 @ p["W_d2"] + p["b_d2"]

    def loss_and_grads(self, params, x, noise, beta, train=True):
        p = params
        M = self.config.latent_dim
        B = x.shape[0]
        xin, h1, o = self._encode_hidden(p, x, noise.get("dropout"))
        if self.variational:
            mu, logvar = o[:, :M], o[:, M:]
            std = np.exp(0.5 * logvar)
            eps = noise.get("eps")
            z = mu + eps * std if eps is not None else mu
        else:
            z = np.tanh(o)
        h3, logits = self._decode(p, z)
        nll, dlogits = multinomial_nll(logits, x)
        loss = nll
        g = {}
        g["W_d2"] = h3.T @ dlogits
        g["b_d2"] = dlogits.sum(0)
        da3 = (dlogits @ p["W_d2"].T) * (1.0 - h3 * h3)
        g["W_d1"] = z.T @ da3
        g["b_d1"] = da3.sum(0)
        dz = da3 @ p["W_d1"].T
        if self.variational:
            loss += beta * gaussian_kl(mu, logvar)
            dmu = dz + beta * mu / B
            dlogvar = beta * 0.5 * (np.exp(logvar) - 1.0) / B
            if eps is not None:
                dlogvar = dlogvar + dz * eps * 0.5 * std
            do = np.hstack([dmu, dlogvar])
        else:
            do = dz * (1.0 - z * z)
        g["W_e2"] = h1.T @ do
        g["b_e2"] = do.sum(0)
        da1 = (do @ p["W_e2"].T) * (1.0 - h1 * h1)
        g["W_e1"] = xin.T @ da1
        g["b_e1"] = da1.sum(0)
        return loss, g

    def encode_rows(self, params, x):
        _, _, o = self._encode_hidden(params, x, None)
        if self.variational:
            return o[:, : self.config.latent_dim]
        return np.tanh(o)

    def score_rows(self, params, x):
        z = self.encode_rows(params, x)
        return self._decode(params, z)[1]


class MultiDAE(_AutoEncoder):
    variational = False


class MultiVAE(_AutoEncoder):
    """VAE with KL weight annealed linearly to ``beta`` over the first epochs."""

    variational = True

    def beta_at(self, epoch, step, steps_per_epoch):
        cfg = self.config
        horizon = cfg.anneal_fraction * max(cfg.max_epochs, 1)
        if horizon <= 0:
            return cfg.beta
        progress = (epoch - 1) + step / steps_per_epoch
        return cfg.beta * min(1.0, progress / horizon)


class BetaVAE(_AutoEncoder):
    """Multinomial VAE with a fixed KL weight ``beta > 1``."""

    variational = True

    def __init__(self, config: LearnerConfig):
        if not config.beta > 1.0:
            raise ValueError("beta_vae requires beta > 1")
        super().__init__(config)
