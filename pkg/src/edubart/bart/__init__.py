"""Additive regression trees with a probit link and group random intercepts."""

from .config import BartConfig
from .moves import Proposal, mh_accept_tree, propose_tree
from .posterior import (
    PosteriorDraws,
    PredictResult,
    fit,
    fit_features,
    predict,
    predict_features,
)
from .priors import (
    calibrate_lambda,
    calibrate_leaf_sd,
    leaf_marginal_loglik,
    split_prob,
)
from .sampler import (
    SamplerState,
    draw_group_effects,
    draw_latent_probit,
    draw_leaf_mu,
    draw_sigma2,
    draw_sigma_u2,
    gibbs_step,
    init_state,
    prepare_data,
)
from .trees import Tree

__all__ = [
    "BartConfig",
    "PosteriorDraws",
    "PredictResult",
    "Proposal",
    "SamplerState",
    "Tree",
    "calibrate_lambda",
    "calibrate_leaf_sd",
    "draw_group_effects",
    "draw_latent_probit",
    "draw_leaf_mu",
    "draw_sigma2",
    "draw_sigma_u2",
    "fit",
    "fit_features",
    "gibbs_step",
    "init_state",
    "leaf_marginal_loglik",
    "mh_accept_tree",
    "predict",
    "predict_features",
    "prepare_data",
    "propose_tree",
    "split_prob",
]
