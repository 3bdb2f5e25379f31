"""Backfitting Gibbs sampler for the additive-tree model.

One sweep updates each tree in turn by Metropolis-Hastings on the partial
residual (response minus all other trees, the group effects, and the
intercept offset), redraws its leaf values conjugately, then updates the
noise variance (continuous response) or the truncated-normal latent
variables (binary response via the probit link), the group intercepts, and
the group variance. Per-tree fits are maintained incrementally and checked
against a full recomputation every `refresh_every` sweeps.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import truncnorm

from .._kernels import leaf_sums, route_rows
from ..errors import DegenerateResponseError, InternalConsistencyError, InvalidInputError
from .moves import mh_accept_tree, predictor_info, propose_tree
from .priors import calibrate_lambda, calibrate_leaf_sd, draw_scaled_inv_chi2
from .trees import Tree


def draw_leaf_mu(residuals, sigma2, sigma_mu2, rng, size=None):
    """Conjugate leaf-value draw given the residuals routed to the leaf."""
    r = np.asarray(residuals, dtype=np.float64)
    v = 1.0 / (r.shape[0] / sigma2 + 1.0 / sigma_mu2)
    m = v * r.sum() / sigma2
    return rng.normal(m, math.sqrt(v), size=size)


def draw_sigma2(residuals, nu, lam, rng, size=None):
    """Conjugate noise-variance draw (scaled-inverse-chi-square prior)."""
    r = np.asarray(residuals, dtype=np.float64)
    n = r.shape[0]
    nu_post = nu + n
    lam_post = (nu * lam + float(r @ r)) / nu_post
    return draw_scaled_inv_chi2(rng, nu_post, lam_post, size=size)


def draw_latent_probit(y, fit, rng):
    """Truncated-normal latent draws: sign of z matches the binary response."""
    fit = np.asarray(fit, dtype=np.float64)
    y = np.asarray(y)
    a = np.where(y == 1, -fit, -np.inf)
    b = np.where(y == 1, np.inf, -fit)
    return truncnorm.rvs(a, b, loc=fit, scale=1.0, random_state=rng)


def draw_group_effects(residuals, group_codes, n_groups, sigma2, sigma_u2, rng):
    """Independent conjugate draws of the group intercepts."""
    if sigma_u2 <= 0.0:
        return np.zeros(n_groups)
    counts = np.bincount(group_codes, minlength=n_groups)
    sums = np.bincount(group_codes, weights=residuals, minlength=n_groups)
    v = 1.0 / (counts / sigma2 + 1.0 / sigma_u2)
    m = v * sums / sigma2
    return m + np.sqrt(v) * rng.standard_normal(n_groups)


def draw_sigma_u2(u, nu_u, lambda_u, rng):
    """Conjugate draw of the group-intercept variance."""
    u = np.asarray(u, dtype=np.float64)
    g = u.shape[0]
    nu_post = nu_u + g
    lam_post = (nu_u * lambda_u + float(u @ u)) / nu_post
    return draw_scaled_inv_chi2(rng, nu_post, lam_post)


@dataclass
class TrainingData:
    X: np.ndarray
    y: np.ndarray
    pinfo: object
    group_codes: np.ndarray | None
    n_groups: int
    mode: str  # "continuous" | "probit"


@dataclass
class SamplerState:
    trees: list
    leaf_idx: np.ndarray  # int32 (B, n)
    total_fit: np.ndarray  # float64 (n,), sum of tree fits only
    offset: float
    sigma2: float
    sigma_mu2: float
    lam: float
    z: np.ndarray | None
    u: np.ndarray
    sigma_u2: float
    rng: np.random.Generator
    sweep: int = 0
    diag: dict = field(default_factory=dict)


def _new_move_diag():
    return {
        m: {"proposed": 0, "accepted": 0, "dead": 0, "invalid": 0, "nonfinite": 0}
        for m in ("grow", "prune", "change")
    }


def init_state(data, config, rng, lam, sigma2_init):
    n = data.y.shape[0]
    b = config.n_trees
    trees = [Tree() for _ in range(b)]
    state = SamplerState(
        trees=trees,
        leaf_idx=np.zeros((b, n), dtype=np.int32),
        total_fit=np.zeros(n),
        offset=0.0,
        sigma2=sigma2_init,
        sigma_mu2=calibrate_leaf_sd(data.mode, config.k, b) ** 2,
        lam=lam,
        z=None,
        u=np.zeros(data.n_groups),
        sigma_u2=config.lambda_u if data.n_groups else 0.0,
        rng=rng,
        diag={"moves": _new_move_diag(), "refreshes": 0},
    )
    if data.mode == "probit":
        ybar = min(max(float(data.y.mean()), 1.0 / (n + 1)), n / (n + 1.0))
        state.offset = float(ndtri(ybar))
        state.z = draw_latent_probit(data.y, np.full(n, state.offset), rng)
    return state


def _row_effects(state, data):
    if data.n_groups:
        return state.u[data.group_codes]
    return 0.0


def gibbs_step(state, data, config, update_structure=True):
    """One full sweep over trees, variance, latents, and group effects."""
    target = state.z if data.mode == "probit" else data.y
    effects = _row_effects(state, data)
    moves = state.diag["moves"]

    for b, tree in enumerate(state.trees):
        leaf_idx_b = state.leaf_idx[b]
        fit_b = tree.leaf_value[leaf_idx_b]
        r_minus = target - (state.total_fit - fit_b) - state.offset - effects
        if update_structure:
            proposal = propose_tree(tree, data.X, leaf_idx_b, data.pinfo, config, state.rng)
            if mh_accept_tree(
                proposal, r_minus, state.sigma2, state.sigma_mu2, state.rng, moves
            ):
                tree = proposal.tree
                state.trees[b] = tree
                leaf_idx_b[proposal.rows] = proposal.new_leaves
        # conjugate redraw of every leaf value
        counts, sums = leaf_sums(leaf_idx_b, r_minus, tree.n_slots)
        leaves = tree.leaves()
        v = 1.0 / (counts[leaves] / state.sigma2 + 1.0 / state.sigma_mu2)
        m = v * sums[leaves] / state.sigma2
        tree.leaf_value[leaves] = m + np.sqrt(v) * state.rng.standard_normal(
            leaves.shape[0]
        )
        state.total_fit += tree.leaf_value[leaf_idx_b] - fit_b

    if data.mode == "continuous":
        resid = data.y - state.total_fit - state.offset - effects
        state.sigma2 = float(draw_sigma2(resid, config.nu, state.lam, state.rng))
    else:
        fit_all = state.total_fit + state.offset + effects
        state.z = draw_latent_probit(data.y, fit_all, state.rng)
        target = state.z

    if data.n_groups:
        r_u = target - state.total_fit - state.offset
        u = draw_group_effects(
            r_u, data.group_codes, data.n_groups, state.sigma2, state.sigma_u2, state.rng
        )
        # identifiability: keep the group effects centered, absorb the mean
        mean_u = float(u.mean())
        u -= mean_u
        state.offset += mean_u
        state.u = u
        state.sigma_u2 = float(draw_sigma_u2(u, config.nu_u, config.lambda_u, state.rng))

    state.sweep += 1
    if config.refresh_every and state.sweep % config.refresh_every == 0:
        _refresh_cache(state, data)
    return state


def _refresh_cache(state, data):
    """Recompute leaf assignments and the fit total; fail loudly on drift."""
    n = data.y.shape[0]
    rows = np.arange(n, dtype=np.int64)
    total = np.zeros(n)
    for b, tree in enumerate(state.trees):
        leaf_idx = route_rows(data.X, rows, *tree.packed(), start=0)
        if not np.array_equal(leaf_idx, state.leaf_idx[b]):
            raise InternalConsistencyError(
                f"tree {b}: incremental leaf assignment diverged from rerouting"
            )
        total += tree.leaf_value[leaf_idx]
    err = float(np.max(np.abs(total - state.total_fit)))
    scale = max(1.0, float(np.max(np.abs(total))))
    if err > 1e-8 * scale:
        raise InternalConsistencyError(
            f"fit cache drifted by {err:.3e} (beyond tolerance)"
        )
    state.total_fit = total
    state.diag["refreshes"] += 1


def prepare_data(X, y, mode, group_codes=None, n_groups=None, cat_features=()):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("feature matrix must be non-empty and 2-D")
    if X.shape[0] != y.shape[0]:
        raise InvalidInputError(
            f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
        )
    if mode not in ("continuous", "probit"):
        raise InvalidInputError(f"mode must be continuous or probit, got {mode!r}")
    if mode == "probit":
        uniq = np.unique(y)
        if not np.isin(uniq, (0.0, 1.0)).all():
            raise InvalidInputError("probit mode needs a 0/1 response")
        if uniq.shape[0] < 2:
            raise DegenerateResponseError(
                "probit response is constant; nothing to classify"
            )
    if group_codes is not None:
        group_codes = np.asarray(group_codes, dtype=np.int64)
        if group_codes.shape[0] != y.shape[0]:
            raise InvalidInputError("group codes must align with rows")
        if n_groups is None:
            n_groups = int(group_codes.max()) + 1 if group_codes.shape[0] else 0
    else:
        n_groups = 0
    return TrainingData(
        X=X,
        y=y,
        pinfo=predictor_info(X, cat_features),
        group_codes=group_codes,
        n_groups=n_groups,
        mode=mode,
    )
