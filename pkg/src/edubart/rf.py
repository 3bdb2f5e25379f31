"""Random forest classifier: bootstrap + per-node feature subsampling.

Trees grow greedily on Gini impurity over `mtry` predictors drawn without
replacement at each node, stopping on purity, `min_node_size`, or the depth
cap. Missing values route left everywhere (same convention as the additive
tree model, so both models share one feature-matrix schema). Leaves keep the
training class proportions; a tree votes for its leaf's majority class and
the forest predicts the majority vote, ties broken toward the lower class
index.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import gini_best_split, route_rows
from .container import read_container, write_container
from .errors import InvalidInputError, SchemaMismatchError


@dataclass
class RFConfig:
    n_trees: int = 500
    mtry: int | None = None  # default: floor(sqrt(p))
    min_node_size: int = 10
    max_depth: int | None = None
    seed: int = 0
    bootstrap: bool = True  # off = every tree sees the full sample

    def validate(self, p):
        if self.n_trees < 1:
            raise InvalidInputError("need at least one tree")
        if self.mtry is not None and not 1 <= self.mtry <= p:
            raise InvalidInputError(f"mtry must be in [1, {p}], got {self.mtry}")
        if self.min_node_size < 1:
            raise InvalidInputError("min_node_size must be >= 1")

    def to_json(self):
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, d):
        return cls(**d)


@dataclass
class RFForest:
    config: RFConfig
    n_classes: int
    n_features: int
    columns: list | None
    # packed node arrays across all trees (kernel layout)
    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    node_class: np.ndarray  # per-node majority class (ties to lower index)
    class_counts: np.ndarray  # (n_nodes, K) training counts per node
    tree_start: np.ndarray
    oob_rows: np.ndarray  # concatenated out-of-bag row indices
    oob_start: np.ndarray
    _cat_start: np.ndarray = field(default=None, repr=False)
    _cat_len: np.ndarray = field(default=None, repr=False)
    _cat_codes: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.feature.shape[0]
        if self._cat_start is None:
            self._cat_start = np.full(n, -1, dtype=np.int64)
            self._cat_len = np.zeros(n, dtype=np.int32)
            self._cat_codes = np.empty(0, dtype=np.float64)

    @property
    def n_trees(self):
        return self.tree_start.shape[0] - 1

    def leaf_proportions(self, node):
        counts = self.class_counts[node]
        return counts / counts.sum()

    def save(self, path):
        meta = {
            "kind": "rf",
            "config": self.config.to_json(),
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "columns": self.columns,
        }
        write_container(
            path,
            meta,
            {
                "feature": self.feature,
                "threshold": self.threshold,
                "missing_left": self.missing_left,
                "left": self.left,
                "right": self.right,
                "node_class": self.node_class,
                "class_counts": self.class_counts,
                "tree_start": self.tree_start,
                "oob_rows": self.oob_rows,
                "oob_start": self.oob_start,
            },
        )

    @classmethod
    def load(cls, path):
        meta, arrays = read_container(path)
        if meta.get("kind") != "rf":
            raise InvalidInputError(f"{path}: not a random-forest artifact")
        return cls(
            config=RFConfig.from_json(meta["config"]),
            n_classes=meta["n_classes"],
            n_features=meta["n_features"],
            columns=meta["columns"],
            **{k: arrays[k] for k in arrays},
        )


class _TreeBuilder:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.missing_left = []
        self.left = []
        self.right = []
        self.counts = []

    def add(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.missing_left.append(1)
        self.left.append(0)
        self.right.append(0)
        self.counts.append(None)
        return len(self.feature) - 1


def _grow_tree(X, y, rows, mtry, config, n_classes, rng):
    tb = _TreeBuilder()
    root = tb.add()
    stack = [(root, rows, 0)]
    while stack:
        slot, node_rows, depth = stack.pop()
        labels = y[node_rows]
        counts = np.bincount(labels, minlength=n_classes).astype(np.int64)
        tb.counts[slot] = counts
        pure = int((counts > 0).sum()) <= 1
        if (
            pure
            or node_rows.shape[0] < config.min_node_size
            or (config.max_depth is not None and depth >= config.max_depth)
        ):
            continue
        feats = rng.choice(X.shape[1], size=mtry, replace=False)
        best = (np.inf, -1, 0.0)
        for j in feats:
            found, thr, score = gini_best_split(X[node_rows, j], labels, n_classes)
            if found and score < best[0]:
                best = (score, int(j), thr)
        if best[1] < 0:
            continue
        _, j, thr = best
        x = X[node_rows, j]
        with np.errstate(invalid="ignore"):
            go_left = (x <= thr) | np.isnan(x)  # missing routes left
        l = tb.add()
        r = tb.add()
        tb.feature[slot] = j
        tb.threshold[slot] = thr
        tb.left[slot] = l
        tb.right[slot] = r
        stack.append((r, node_rows[~go_left], depth + 1))
        stack.append((l, node_rows[go_left], depth + 1))
    return tb


def fit_rf(X, y, config=None, columns=None):
    """Grow the forest; `y` holds class labels 0..K-1."""
    config = config or RFConfig()
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("feature matrix must be non-empty and 2-D")
    if X.shape[0] != y.shape[0]:
        raise InvalidInputError("X and y row counts differ")
    if y.min() < 0:
        raise InvalidInputError("labels must be non-negative class indices")
    p = X.shape[1]
    config.validate(p)
    n = X.shape[0]
    n_classes = int(y.max()) + 1
    mtry = config.mtry if config.mtry is not None else max(1, int(np.sqrt(p)))

    feature, threshold, missing_left = [], [], []
    left, right, node_class, class_counts = [], [], [], []
    tree_start = [0]
    oob_rows, oob_start = [], [0]
    offset = 0
    for b in range(config.n_trees):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((config.seed, b)))
        )
        if config.bootstrap:
            rows = rng.integers(0, n, size=n)
            inbag = np.zeros(n, dtype=bool)
            inbag[rows] = True
            oob = np.nonzero(~inbag)[0]
        else:
            rows = np.arange(n)
            oob = np.empty(0, dtype=np.int64)
        tb = _grow_tree(X, y, np.asarray(rows, dtype=np.int64), mtry, config, n_classes, rng)
        k = len(tb.feature)
        feature.append(np.asarray(tb.feature, dtype=np.int32))
        threshold.append(np.asarray(tb.threshold, dtype=np.float64))
        missing_left.append(np.asarray(tb.missing_left, dtype=np.uint8))
        left.append(np.asarray(tb.left, dtype=np.int32) + offset)
        right.append(np.asarray(tb.right, dtype=np.int32) + offset)
        cc = np.vstack(tb.counts)
        class_counts.append(cc)
        node_class.append(np.argmax(cc, axis=1).astype(np.int32))
        offset += k
        tree_start.append(offset)
        oob_rows.append(oob.astype(np.int64))
        oob_start.append(oob_start[-1] + oob.shape[0])

    return RFForest(
        config=config,
        n_classes=n_classes,
        n_features=p,
        columns=list(columns) if columns is not None else None,
        feature=np.concatenate(feature),
        threshold=np.concatenate(threshold),
        missing_left=np.concatenate(missing_left),
        left=np.concatenate(left),
        right=np.concatenate(right),
        node_class=np.concatenate(node_class),
        class_counts=np.vstack(class_counts),
        tree_start=np.asarray(tree_start, dtype=np.int64),
        oob_rows=np.concatenate(oob_rows) if oob_rows else np.empty(0, np.int64),
        oob_start=np.asarray(oob_start, dtype=np.int64),
    )


def _check_schema(forest, X, columns):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise SchemaMismatchError(
            f"expected {forest.n_features} predictor columns, got "
            f"{X.shape[1] if X.ndim == 2 else 'non-2D'}"
        )
    if columns is not None and forest.columns is not None and list(columns) != list(
        forest.columns
    ):
        raise SchemaMismatchError("column schema differs from the training matrix")
    return X


def vote_counts(forest, X, columns=None, tree_subset=None):
    """Per-row per-class tree vote counts."""
    X = _check_schema(forest, X, columns)
    m = X.shape[0]
    votes = np.zeros((m, forest.n_classes), dtype=np.int64)
    all_rows = np.arange(m, dtype=np.int64)
    trees = range(forest.n_trees) if tree_subset is None else tree_subset
    for t in trees:
        leaves = route_rows(
            X,
            all_rows,
            forest.feature,
            forest.threshold,
            forest.missing_left,
            forest.left,
            forest.right,
            forest._cat_start,
            forest._cat_len,
            forest._cat_codes,
            start=int(forest.tree_start[t]),
        )
        votes[all_rows, forest.node_class[leaves]] += 1
    return votes


def predict_rf(forest, X, columns=None):
    """Majority-vote class labels (ties go to the lower class index)."""
    return np.argmax(vote_counts(forest, X, columns), axis=1)


def predict_proba_rf(forest, X, columns=None):
    """Class-1 vote fraction per row."""
    votes = vote_counts(forest, X, columns)
    return votes[:, 1] / forest.n_trees if forest.n_classes > 1 else np.zeros(X.shape[0])


def oob_error(forest, X, y):
    """Out-of-bag misclassification rate (rows never out-of-bag are skipped)."""
    X = _check_schema(forest, X, None)
    y = np.asarray(y, dtype=np.int64)
    m = X.shape[0]
    votes = np.zeros((m, forest.n_classes), dtype=np.int64)
    for t in range(forest.n_trees):
        oob = forest.oob_rows[forest.oob_start[t] : forest.oob_start[t + 1]]
        if oob.shape[0] == 0:
            continue
        leaves = route_rows(
            X,
            oob,
            forest.feature,
            forest.threshold,
            forest.missing_left,
            forest.left,
            forest.right,
            forest._cat_start,
            forest._cat_len,
            forest._cat_codes,
            start=int(forest.tree_start[t]),
        )
        votes[oob, forest.node_class[leaves]] += 1
    covered = votes.sum(axis=1) > 0
    if not covered.any():
        raise InvalidInputError("no rows were ever out-of-bag")
    pred = np.argmax(votes[covered], axis=1)
    return float(np.mean(pred != y[covered]))
