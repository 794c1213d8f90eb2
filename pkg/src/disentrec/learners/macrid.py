"""MacridVAE: macro-concept prototypes with per-concept cosine-decoded VAE posteriors."""

from __future__ import annotations

import numpy as np

from .base import LearnerConfig, NeuralRecommender, l2_normalize, l2_normalize_backward


def _softmax_rows(S):
    e = np.exp(S - S.max(1, keepdims=True))
    return e / e.sum(1, keepdims=True)


class MacridVAE(NeuralRecommender):
    """Items are softly assigned to ``macro_k`` prototypes; each concept gets a
    ``d = latent_dim / macro_k`` dimensional posterior from a shared encoder fed
    the concept-gated history. The decoder mixes per-concept cosine logits
    weighted by item assignments.

    ``hidden_dim = 0`` gives a linear encoder.
    """

    def __init__(self, config: LearnerConfig):
        if config.macro_k < 2 or config.latent_dim % config.macro_k:
            raise ValueError("macro_k must be >= 2 and divide latent_dim")
        super().__init__(config)

    @property
    def d(self) -> int:
        return self.config.latent_dim // self.config.macro_k

    def concept_blocks(self):
        d = self.d
        return [list(range(k * d, (k + 1) * d)) for k in range(self.config.macro_k)]

    def init_params(self, n_items, rng):
        K, d, H = self.config.macro_k, self.d, self.config.hidden_dim
        p = {"E": rng.normal(0, 1.0, (n_items, d)), "P": rng.normal(0, 1.0, (K, d))}
        if H > 0:
            lim1 = np.sqrt(6.0 / (n_items + H))
            lim2 = np.sqrt(6.0 / (H + 2 * d))
            p.update(W_e1=rng.uniform(-lim1, lim1, (n_items, H)), b_e1=rng.normal(0, 1e-3, H),
                     W_e2=rng.uniform(-lim2, lim2, (H, 2 * d)), b_e2=rng.normal(0, 1e-3, 2 * d))
        else:
            lim = np.sqrt(6.0 / (n_items + 2 * d))
            p.update(W_e2=rng.uniform(-lim, lim, (n_items, 2 * d)), b_e2=rng.normal(0, 1e-3, 2 * d))
        return p

    def sample_noise(self, batch, rng):
        keep = self.config.dropout_keep
        return {
            "dropout": (rng.random((batch, self.n_items)) < keep) / keep if keep < 1.0 else None,
            "eps": rng.standard_normal((self.config.macro_k, batch, self.d)),
        }

    def assignments(self, params=None) -> np.ndarray:
        """Item x concept soft assignment (rows sum to one)."""
        params = self.params if params is None else params
        En, _ = l2_normalize(params["E"])
        Pn, _ = l2_normalize(params["P"])
        return _softmax_rows(En @ Pn.T / self.config.temperature)

    def end_epoch(self, params, rng):
        # alternating prototype step: move each prototype to the mean direction of
        # the items it wins; an empty prototype is re-seeded at the worst-covered item
        En, _ = l2_normalize(params["E"])
        Pn, _ = l2_normalize(params["P"])
        for _ in range(self.config.prototype_steps):
            sim = En @ Pn.T
            win = sim.argmax(1)
            for k in range(len(Pn)):
                members = win == k
                if members.any():
                    Pn[k] = En[members].sum(0)
                else:
                    Pn[k] = En[sim.max(1).argmin()]
                    win[sim.max(1).argmin()] = k
            Pn, _ = l2_normalize(Pn)
        params["P"][...] = Pn

    def _encoder(self, p, xin):
        if "W_e1" in p:
            h = np.tanh(xin @ p["W_e1"] + p["b_e1"])
            return h, h @ p["W_e2"] + p["b_e2"]
        return None, xin @ p["W_e2"] + p["b_e2"]

    def loss_and_grads(self, params, x, noise, beta, train=True):
        p = params
        cfg = self.config
        tau, s0, K, d = cfg.temperature, cfg.prior_std, cfg.macro_k, self.d
        B = x.shape[0]
        mask = noise.get("dropout")
        eps = noise.get("eps")

        En, nE = l2_normalize(p["E"])
        Pn, nP = l2_normalize(p["P"])
        A = _softmax_rows(En @ Pn.T / tau)
        cache = []
        probs = np.zeros_like(x)
        kl = 0.0
        for k in range(K):
            u = x * A[:, k]
            un, nu = l2_normalize(u)
            xin = un if mask is None else un * mask
            h, o = self._encoder(p, xin)
            mu, lv = o[:, :d], o[:, d:]
            mun, nmu = l2_normalize(mu)
            std = np.exp(0.5 * lv) * s0
            zr = mun + eps[k] * std if eps is not None else mun
            zn, nz = l2_normalize(zr)
            G = np.exp(zn @ En.T / tau)
            probs += G * A[:, k]
            kl += 0.5 * float((-lv + np.exp(lv) - 1.0).sum()) / B
            cache.append((u, un, nu, xin, h, lv, mun, nmu, std, zn, nz, G))
        tot = probs.sum(1, keepdims=True)
        nll = -float((x * (np.log(probs) - np.log(tot))).sum()) / B
        loss = nll + beta * kl

        g = {k: np.zeros_like(v) for k, v in p.items()}
        dEn = np.zeros_like(En)
        dA = np.zeros_like(A)
        dprobs = (-x / probs + x.sum(1, keepdims=True) / tot) / B
        for k, (u, un, nu, xin, h, lv, mun, nmu, std, zn, nz, G) in enumerate(cache):
            dA[:, k] += (dprobs * G).sum(0)
            dL = dprobs * A[:, k] * G
            dzn = dL @ En / tau
            dEn += dL.T @ zn / tau
            dzr = l2_normalize_backward(zn, nz, dzn)
            dlv = beta * 0.5 * (np.exp(lv) - 1.0) / B
            if eps is not None:
                dlv = dlv + dzr * eps[k] * 0.5 * std
            dmu = l2_normalize_backward(mun, nmu, dzr)
            do = np.hstack([dmu, dlv])
            if h is not None:
                g["W_e2"] += h.T @ do
                g["b_e2"] += do.sum(0)
                da = (do @ p["W_e2"].T) * (1.0 - h * h)
                g["W_e1"] += xin.T @ da
                g["b_e1"] += da.sum(0)
                dxin = da @ p["W_e1"].T
            else:
                g["W_e2"] += xin.T @ do
                g["b_e2"] += do.sum(0)
                dxin = do @ p["W_e2"].T
            dun = dxin if mask is None else dxin * mask
            du = l2_normalize_backward(un, nu, dun)
            dA[:, k] += (du * x).sum(0)
        dS = A * (dA - (dA * A).sum(1, keepdims=True)) / tau
        dEn += dS @ Pn
        dPn = dS.T @ En
        g["E"] = l2_normalize_backward(En, nE, dEn)
        g["P"] = l2_normalize_backward(Pn, nP, dPn)
        return loss, g

    def _concept_means(self, p, x):
        A = self.assignments(p)
        out = []
        for k in range(self.config.macro_k):
            un, _ = l2_normalize(x * A[:, k])
            _, o = self._encoder(p, un)
            out.append(l2_normalize(o[:, : self.d])[0])
        return A, out

    def encode_rows(self, params, x):
        return np.hstack(self._concept_means(params, x)[1])

    def score_rows(self, params, x):
        A, means = self._concept_means(params, x)
        En, _ = l2_normalize(params["E"])
        probs = np.zeros((x.shape[0], En.shape[0]))
        for k, mu in enumerate(means):
            probs += np.exp(mu @ En.T / self.config.temperature) * A[:, k]
        return np.log(probs)
