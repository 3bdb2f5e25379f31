"""Structure moves for the tree sampler: GROW, PRUNE, CHANGE.

The target density over trees is: structural prior (depth-decaying split
probability) times a data-independent rule prior per internal node
(predictor uniform over p; numeric threshold uniform over the predictor's
globally observed range; categorical subset uniform over nonempty proper
subsets of the globally observed codes; missing flag Bernoulli(1/2)), with
zero mass on trees that leave any leaf empty.

Proposals pick split values from the node-local candidate set (midpoints of
distinct observed values / subsets of locally observed codes), so forward
and reverse selection probabilities are computed honestly from the actual
node data; a reverse selection that cannot reproduce the current rule makes
the move unacceptable. Proposals that cannot be formed at all (constant
predictor at the node, depth cap) fall through to a self-transition.
"""

import math
from dataclasses import dataclass

import numpy as np

from .._kernels import leaf_sums, route_rows
from .priors import leaf_loglik_stats, log_n_subsets, split_prob

LOG_HALF = math.log(0.5)

MOVE_GROW = "grow"
MOVE_PRUNE = "prune"
MOVE_CHANGE = "change"


@dataclass
class PredictorInfo:
    """Data-independent per-predictor facts used by rule priors."""

    p: int
    is_cat: np.ndarray  # bool (p,)
    log_range: np.ndarray  # numeric: log(global observed max - min)
    log_subsets: np.ndarray  # categorical: log(2^K - 2) over global codes


def predictor_info(X, cat_features=()):
    p = X.shape[1]
    is_cat = np.zeros(p, dtype=bool)
    is_cat[list(cat_features)] = True
    log_range = np.full(p, np.nan)
    log_subsets = np.full(p, -np.inf)
    for j in range(p):
        col = X[:, j]
        obs = col[~np.isnan(col)]
        if obs.shape[0] == 0:
            continue
        if is_cat[j]:
            log_subsets[j] = log_n_subsets(np.unique(obs).shape[0])
        else:
            span = float(obs.max() - obs.min())
            if span > 0:
                log_range[j] = math.log(span)
    return PredictorInfo(p, is_cat, log_range, log_subsets)


@dataclass
class Proposal:
    move: str
    tree: object = None  # proposed Tree
    rows: np.ndarray = None  # affected row positions
    old_leaves: np.ndarray = None  # per affected row, current tree
    new_leaves: np.ndarray = None  # per affected row, proposed tree
    log_prior_delta: float = 0.0
    log_q_ratio: float = 0.0  # log q(T|T') - log q(T'|T)
    valid: bool = False  # inside target support and reverse-proposable
    dead: bool = False  # move could not be formed: self-transition


def move_probabilities(tree, config):
    """Renormalized move-kind probabilities: a stump only admits GROW."""
    if tree.is_stump:
        return {MOVE_GROW: 1.0}
    g, p, c = config.move_probs
    return {MOVE_GROW: g, MOVE_PRUNE: p, MOVE_CHANGE: c}


def _split_candidates(x):
    """Numeric candidates: midpoints of adjacent distinct observed values."""
    obs = x[~np.isnan(x)]
    uniq = np.unique(obs)
    if uniq.shape[0] < 2:
        return None
    mids = (uniq[:-1] + uniq[1:]) * 0.5
    # a midpoint rounded onto the upper value would not separate it
    return np.where(mids >= uniq[1:], uniq[:-1], mids)


def _go_left(x, threshold, subset, missing_left):
    if subset is not None:
        obs_left = np.isin(x, subset)
    else:
        with np.errstate(invalid="ignore"):
            obs_left = x <= threshold
    return np.where(np.isnan(x), missing_left, obs_left)


def _structure_log_prior(depth, config):
    """log prior factor of turning a depth-d leaf into a split with two leaves."""
    ps_d = split_prob(depth, config.alpha, config.beta, config.max_depth)
    ps_c = split_prob(depth + 1, config.alpha, config.beta, config.max_depth)
    return math.log(ps_d) + 2.0 * math.log1p(-ps_c) - math.log1p(-ps_d)


def _rule_log_prior(j, pinfo):
    """log prior of one split rule (predictor, value, missing flag)."""
    if pinfo.is_cat[j]:
        value_term = -pinfo.log_subsets[j]
    else:
        value_term = -pinfo.log_range[j]
    return -math.log(pinfo.p) + value_term + LOG_HALF


def _draw_subset(codes, rng):
    k = codes.shape[0]
    while True:
        bits = rng.integers(0, 2, size=k).astype(bool)
        t = int(bits.sum())
        if 0 < t < k:
            return codes[bits]


def _reverse_rule_check(x, feat, threshold, subset, pinfo):
    """Can the stored rule be re-proposed from this node data? Returns
    (ok, log candidate count)."""
    obs = x[~np.isnan(x)]
    if pinfo.is_cat[feat]:
        codes = np.unique(obs)
        k = codes.shape[0]
        if k < 2 or subset is None or subset.shape[0] >= k:
            return False, 0.0
        if not np.isin(subset, codes).all():
            return False, 0.0
        return True, log_n_subsets(k)
    mids = _split_candidates(x)
    if mids is None or not np.any(mids == threshold):
        return False, 0.0
    return True, math.log(mids.shape[0])


def propose_tree(tree, X, leaf_idx_b, pinfo, config, rng):
    """One structure proposal.

    Returns a Proposal carrying the modified tree, the affected rows with
    their old/new leaf assignments, and the prior and proposal-probability
    pieces of the acceptance ratio. When the drawn move cannot be formed
    (depth cap, constant predictor at the node) the proposal comes back
    `dead` and the chain self-transitions.
    """
    probs = move_probabilities(tree, config)
    r = rng.random()
    acc = 0.0
    move = MOVE_GROW
    for name in (MOVE_GROW, MOVE_PRUNE, MOVE_CHANGE):
        acc += probs.get(name, 0.0)
        if r < acc:
            move = name
            break
    if move == MOVE_GROW:
        return _propose_grow(tree, X, leaf_idx_b, pinfo, config, rng, probs)
    if move == MOVE_PRUNE:
        return _propose_prune(tree, X, leaf_idx_b, pinfo, config, rng, probs)
    return _propose_change(tree, X, leaf_idx_b, pinfo, config, rng, probs)


def _propose_grow(tree, X, leaf_idx_b, pinfo, config, rng, probs):
    leaves = tree.leaves()
    leaf = int(leaves[rng.integers(leaves.shape[0])])
    if config.max_depth is not None and tree.depth[leaf] >= config.max_depth:
        return Proposal(move=MOVE_GROW, dead=True)
    j = int(rng.integers(pinfo.p))
    rows = np.nonzero(leaf_idx_b == leaf)[0]
    x = X[rows, j]
    if pinfo.is_cat[j]:
        codes = np.unique(x[~np.isnan(x)])
        if codes.shape[0] < 2:
            return Proposal(move=MOVE_GROW, dead=True)
        subset = _draw_subset(codes, rng)
        threshold = 0.0
        log_ncand = log_n_subsets(codes.shape[0])
    else:
        mids = _split_candidates(x)
        if mids is None:
            return Proposal(move=MOVE_GROW, dead=True)
        subset = None
        threshold = float(mids[rng.integers(mids.shape[0])])
        log_ncand = math.log(mids.shape[0])
    missing_left = bool(rng.integers(2))

    new_tree = tree.copy()
    if subset is not None:
        l, r = new_tree.grow(leaf, j, subset=subset, missing_left=missing_left)
    else:
        l, r = new_tree.grow(leaf, j, threshold=threshold, missing_left=missing_left)
    go_left = _go_left(x, threshold, subset, missing_left)
    new_leaves = np.where(go_left, l, r).astype(np.int32)

    depth = int(tree.depth[leaf])
    log_prior_delta = _structure_log_prior(depth, config) + _rule_log_prior(j, pinfo)
    log_q_fwd = (
        math.log(probs[MOVE_GROW])
        - math.log(leaves.shape[0])
        - math.log(pinfo.p)
        - log_ncand
        + LOG_HALF
    )
    probs_rev = move_probabilities(new_tree, config)
    log_q_rev = math.log(probs_rev[MOVE_PRUNE]) - math.log(
        new_tree.prunable_nodes().shape[0]
    )
    return Proposal(
        move=MOVE_GROW,
        tree=new_tree,
        rows=rows,
        old_leaves=np.full(rows.shape[0], leaf, dtype=np.int32),
        new_leaves=new_leaves,
        log_prior_delta=log_prior_delta,
        log_q_ratio=log_q_rev - log_q_fwd,
        valid=True,
    )


def _propose_prune(tree, X, leaf_idx_b, pinfo, config, rng, probs):
    prunable = tree.prunable_nodes()
    node = int(prunable[rng.integers(prunable.shape[0])])
    l, r = int(tree.left[node]), int(tree.right[node])
    rows = np.nonzero((leaf_idx_b == l) | (leaf_idx_b == r))[0]
    feat, threshold, subset, _missing = tree.rule_of(node)

    new_tree = tree.copy()
    new_tree.prune(node)

    ok, log_ncand_rev = _reverse_rule_check(X[rows, feat], feat, threshold, subset, pinfo)
    depth = int(tree.depth[node])
    log_prior_delta = -(_structure_log_prior(depth, config) + _rule_log_prior(feat, pinfo))
    log_q_fwd = math.log(probs[MOVE_PRUNE]) - math.log(prunable.shape[0])
    probs_rev = move_probabilities(new_tree, config)
    log_q_rev = (
        math.log(probs_rev[MOVE_GROW])
        - math.log(new_tree.n_leaves)
        - math.log(pinfo.p)
        - log_ncand_rev
        + LOG_HALF
    )
    return Proposal(
        move=MOVE_PRUNE,
        tree=new_tree,
        rows=rows,
        old_leaves=leaf_idx_b[rows].copy(),
        new_leaves=np.full(rows.shape[0], node, dtype=np.int32),
        log_prior_delta=log_prior_delta,
        log_q_ratio=log_q_rev - log_q_fwd,
        valid=ok,
    )


def _propose_change(tree, X, leaf_idx_b, pinfo, config, rng, probs):
    internal = tree.internal_nodes()
    node = int(internal[rng.integers(internal.shape[0])])
    sub_leaves = tree.subtree_leaves(node)
    rows = np.nonzero(np.isin(leaf_idx_b, sub_leaves))[0]
    j = int(rng.integers(pinfo.p))
    x = X[rows, j]
    if pinfo.is_cat[j]:
        codes = np.unique(x[~np.isnan(x)])
        if codes.shape[0] < 2:
            return Proposal(move=MOVE_CHANGE, dead=True)
        subset = _draw_subset(codes, rng)
        threshold = 0.0
        log_ncand_fwd = log_n_subsets(codes.shape[0])
    else:
        mids = _split_candidates(x)
        if mids is None:
            return Proposal(move=MOVE_CHANGE, dead=True)
        subset = None
        threshold = float(mids[rng.integers(mids.shape[0])])
        log_ncand_fwd = math.log(mids.shape[0])
    missing_left = bool(rng.integers(2))

    feat_old, thr_old, subset_old, _ = tree.rule_of(node)
    new_tree = tree.copy()
    if subset is not None:
        new_tree.change_rule(node, j, subset=subset, missing_left=missing_left)
    else:
        new_tree.change_rule(node, j, threshold=threshold, missing_left=missing_left)

    new_leaves = route_rows(X, rows, *new_tree.packed(), start=node)
    # support check: every leaf under the node keeps at least one row
    occupied = np.unique(new_leaves)
    valid = occupied.shape[0] == sub_leaves.shape[0]
    ok_rev, log_ncand_rev = _reverse_rule_check(
        X[rows, feat_old], feat_old, thr_old, subset_old, pinfo
    )

    log_prior_delta = _rule_log_prior(j, pinfo) - _rule_log_prior(feat_old, pinfo)
    log_q_fwd = (
        math.log(probs[MOVE_CHANGE])
        - math.log(internal.shape[0])
        - math.log(pinfo.p)
        - log_ncand_fwd
        + LOG_HALF
    )
    probs_rev = move_probabilities(new_tree, config)
    log_q_rev = (
        math.log(probs_rev[MOVE_CHANGE])
        - math.log(internal.shape[0])
        - math.log(pinfo.p)
        - (log_ncand_rev if ok_rev else 0.0)
        + LOG_HALF
    )
    return Proposal(
        move=MOVE_CHANGE,
        tree=new_tree,
        rows=rows,
        old_leaves=leaf_idx_b[rows].copy(),
        new_leaves=new_leaves,
        log_prior_delta=log_prior_delta,
        log_q_ratio=log_q_rev - log_q_fwd,
        valid=valid and ok_rev,
    )


def _region_loglik(leaves, r, r_sq, sigma2, sigma_mu2):
    n_nodes = int(leaves.max()) + 1
    counts, sums = leaf_sums(leaves, r, n_nodes)
    _, sums_sq = leaf_sums(leaves, r_sq, n_nodes)
    total = 0.0
    for node in np.unique(leaves):
        total += leaf_loglik_stats(
            int(counts[node]), sums[node], sums_sq[node], sigma2, sigma_mu2
        )
    return total


def mh_accept_tree(proposal, resid, sigma2, sigma_mu2, rng, move_diag):
    """Accept/reject a proposal against the marginal likelihood of the
    affected leaves (leaf values integrated out). Updates move diagnostics;
    returns True on acceptance."""
    d = move_diag[proposal.move]
    if proposal.dead:
        d["dead"] += 1
        return False
    d["proposed"] += 1
    if not proposal.valid:
        d["invalid"] += 1
        return False
    r = np.ascontiguousarray(resid[proposal.rows])
    r_sq = r * r
    ml_old = _region_loglik(proposal.old_leaves, r, r_sq, sigma2, sigma_mu2)
    ml_new = _region_loglik(proposal.new_leaves, r, r_sq, sigma2, sigma_mu2)
    log_acc = (ml_new - ml_old) + proposal.log_prior_delta + proposal.log_q_ratio
    if not math.isfinite(log_acc):
        d["nonfinite"] += 1
        return False
    u = rng.random()
    if log_acc >= 0.0 or u < math.exp(log_acc):
        d["accepted"] += 1
        return True
    return False
