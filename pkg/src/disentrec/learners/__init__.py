"""Representation learners sharing ``fit`` / ``encode`` / ``scores``."""

from __future__ import annotations

from ..dataio import InteractionMatrix
from .autoencoders import BetaVAE, MultiDAE, MultiVAE
from .base import (MODELS, ConfigError, DivergedError, LearnerConfig, NotFittedError,
                   RepresentationMatrix, load_checkpoint, save_checkpoint)
from .linear import NoRepresentationError, PureSVD, TopPopular, randomized_svd
from .macrid import MacridVAE

LEARNERS = {
    "top_popular": TopPopular,
    "pure_svd": PureSVD,
    "multi_dae": MultiDAE,
    "multi_vae": MultiVAE,
    "beta_vae": BetaVAE,
    "macrid_vae": MacridVAE,
}


def make_learner(config: LearnerConfig):
    return LEARNERS[config.model](config)


def load_learner(path):
    _, config = load_checkpoint(path)
    return LEARNERS[config.model].load(path)


def fit_learner(config: LearnerConfig, train: InteractionMatrix,
                validation: InteractionMatrix | None = None):
    return make_learner(config).fit(train, validation)


def fit_top_popular(train: InteractionMatrix):
    return TopPopular().fit(train).scores(train)


def _fit_with_repr(cls, train, config, validation=None):
    model = cls(config).fit(train, validation)
    return model.encode(train), model.scores(train)


def fit_pure_svd(train, config, validation=None):
    return _fit_with_repr(PureSVD, train, config, validation)


def fit_multi_dae(train, config, validation=None):
    return _fit_with_repr(MultiDAE, train, config, validation)


def fit_multi_vae(train, config, validation=None):
    return _fit_with_repr(MultiVAE, train, config, validation)


def fit_beta_vae(train, config, validation=None):
    return _fit_with_repr(BetaVAE, train, config, validation)


def fit_macrid_vae(train, config, validation=None):
    return _fit_with_repr(MacridVAE, train, config, validation)


def encode_users(model, interactions: InteractionMatrix) -> RepresentationMatrix:
    """Deterministic (posterior-mean) encoding of each user's row."""
    return model.encode(interactions)


__all__ = [
    "LEARNERS", "MODELS", "BetaVAE", "ConfigError", "DivergedError", "LearnerConfig", "MacridVAE",
    "MultiDAE", "MultiVAE", "NoRepresentationError", "NotFittedError", "PureSVD",
    "RepresentationMatrix", "TopPopular", "encode_users", "fit_beta_vae", "fit_learner",
    "fit_macrid_vae", "fit_multi_dae", "fit_multi_vae", "fit_pure_svd", "fit_top_popular",
    "load_learner", "make_learner", "randomized_svd",
]
