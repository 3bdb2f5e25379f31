"""Prior calibration and the conjugate pieces of the tree model.

The split prior, leaf-value prior scale, and noise-variance calibration
follow the usual additive-tree conventions: node split probability decays
with depth as ``alpha * (1 + depth) ** -beta``; leaf values are
``N(0, sigma_mu^2)`` with sigma_mu sized so the ensemble total spans the
response range; the noise variance gets a scaled-inverse-chi-square prior
anchored below a pilot linear regression's residual variance.
"""

import math

import numpy as np
from scipy.stats import chi2

_LOG_2PI = math.log(2.0 * math.pi)


def split_prob(depth, alpha, beta, max_depth=None):
    """Prior probability that a node at `depth` is internal."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if max_depth is not None and depth >= max_depth:
        return 0.0
    return alpha * (1.0 + depth) ** (-beta)


def calibrate_leaf_sd(mode, k, n_trees):
    """Leaf-value prior sd.

    Continuous responses are internally rescaled to [-0.5, 0.5], so the
    ensemble total f = sum of n_trees leaves should span about (-0.5, 0.5);
    on the latent probit scale it should span about (-3, 3).
    """
    half_range = 0.5 if mode == "continuous" else 3.0
    return half_range / (k * math.sqrt(n_trees))


def calibrate_lambda(y, X, nu, q):
    """Noise-variance prior scale.

    Picks lambda so the prior puts mass `q` below the residual variance of an
    ordinary linear regression of y on X (with intercept). Falls back to
    var(y) when the pilot regression is under-determined or singular; returns
    (lambda, used_fallback).
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    used_fallback = False
    s2 = None
    if X is not None:
        Xp = np.asarray(X, dtype=np.float64)
        Xp = np.nan_to_num(Xp, nan=0.0)
        design = np.column_stack([np.ones(n), Xp])
        if n > design.shape[1]:
            coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
            if rank == design.shape[1]:
                resid = y - design @ coef
                s2 = float(resid @ resid) / (n - design.shape[1])
    if s2 is None or not np.isfinite(s2) or s2 <= 0:
        s2 = float(np.var(y))
        used_fallback = True
    if s2 <= 0:  # constant response: keep the prior proper
        s2 = 1e-12
        used_fallback = True
    lam = s2 * chi2.ppf(1.0 - q, nu) / nu
    return float(lam), used_fallback


def leaf_loglik_stats(n, total, total_sq, sigma2, sigma_mu2):
    """Log marginal likelihood of one leaf's residuals, leaf value integrated out.

    Closed form of the integral of prod N(r_i | mu, sigma2) * N(mu | 0, sigma_mu2)
    over mu, from the sufficient statistics (count, sum, sum of squares).
    """
    if n == 0:
        return 0.0
    a = n / sigma2 + 1.0 / sigma_mu2
    b = total / sigma2
    return (
        -0.5 * n * (_LOG_2PI + math.log(sigma2))
        - 0.5 * math.log(sigma_mu2 * a)
        - total_sq / (2.0 * sigma2)
        + b * b / (2.0 * a)
    )


def leaf_marginal_loglik(residuals, sigma2, sigma_mu2):
    """Array-input convenience wrapper around `leaf_loglik_stats`."""
    r = np.asarray(residuals, dtype=np.float64)
    return leaf_loglik_stats(r.shape[0], float(r.sum()), float(r @ r), sigma2, sigma_mu2)


def draw_scaled_inv_chi2(rng, nu, lam, size=None):
    """Draw from the scaled-inverse-chi-square(nu, lam) distribution."""
    return nu * lam / rng.chisquare(nu, size=size)


def log_n_subsets(k):
    """log(2^k - 2): number of nonempty proper subsets of k categories."""
    if k < 2:
        return -math.inf
    if k > 60:
        return k * math.log(2.0) + math.log1p(-(2.0 ** (1 - k)))
    return math.log(2.0**k - 2.0)
