"""Retained posterior draws: fitting, prediction, and (de)serialization.

A fitted model keeps, per retained draw, the per-row training fit, the group
intercepts, the variance parameters, and a compact snapshot of the whole
tree ensemble, so new rows can be scored without refitting. Draws are stored
on the original response scale for continuous fits and on the latent probit
scale for binary ones.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .._kernels import forest_fit
from ..container import read_container, write_container
from ..errors import InvalidInputError, SchemaMismatchError
from .config import BartConfig
from .priors import calibrate_lambda
from .sampler import gibbs_step, init_state, prepare_data


class _ForestPack:
    """Accumulates compacted trees into one set of packed arrays."""

    def __init__(self):
        self.chunks = {
            k: []
            for k in (
                "feature",
                "threshold",
                "missing_left",
                "left",
                "right",
                "cat_start",
                "cat_len",
                "cat_codes",
                "leaf_value",
            )
        }
        self.n_nodes = 0
        self.n_cat = 0
        self.tree_start = [0]

    def add_tree(self, c):
        k = c["feature"].shape[0]
        internal = c["feature"] >= 0
        self.chunks["feature"].append(c["feature"])
        self.chunks["threshold"].append(c["threshold"])
        self.chunks["missing_left"].append(c["missing_left"])
        self.chunks["left"].append(
            np.where(internal, c["left"] + self.n_nodes, 0).astype(np.int32)
        )
        self.chunks["right"].append(
            np.where(internal, c["right"] + self.n_nodes, 0).astype(np.int32)
        )
        self.chunks["cat_start"].append(
            np.where(c["cat_start"] >= 0, c["cat_start"] + self.n_cat, -1)
        )
        self.chunks["cat_len"].append(c["cat_len"])
        self.chunks["cat_codes"].append(c["cat_codes"])
        self.chunks["leaf_value"].append(c["leaf_value"])
        self.n_nodes += k
        self.n_cat += c["cat_codes"].shape[0]
        self.tree_start.append(self.n_nodes)

    def arrays(self):
        dtypes = {
            "feature": np.int32,
            "threshold": np.float64,
            "missing_left": np.uint8,
            "left": np.int32,
            "right": np.int32,
            "cat_start": np.int64,
            "cat_len": np.int32,
            "cat_codes": np.float64,
            "leaf_value": np.float64,
        }
        out = {}
        for k, chunks in self.chunks.items():
            if chunks:
                out[k] = np.concatenate(chunks).astype(dtypes[k])
            else:
                out[k] = np.empty(0, dtype=dtypes[k])
        out["tree_start"] = np.asarray(self.tree_start, dtype=np.int64)
        return out


@dataclass
class PosteriorDraws:
    mode: str
    config: BartConfig
    n_trees: int
    n_features: int
    columns: list | None
    group_labels: list
    train_fit: np.ndarray  # (D, n) original/probit scale, group effects excluded
    u: np.ndarray  # (D, G)
    sigma2: np.ndarray  # (D,)
    sigma_u2: np.ndarray  # (D,)
    offsets: np.ndarray  # (D,) model-scale intercept, used with the forests
    chain: np.ndarray  # (D,) chain index per draw
    forest: dict  # packed arrays + tree_start
    y_min: float
    y_scale: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.train_fit.shape[0]

    @property
    def grouping(self):
        return self.u.shape[1] > 0

    def save(self, path):
        meta = {
            "kind": "bart",
            "mode": self.mode,
            "config": self.config.to_json(),
            "n_trees": self.n_trees,
            "n_features": self.n_features,
            "columns": self.columns,
            "group_labels": self.group_labels,
            "y_min": self.y_min,
            "y_scale": self.y_scale,
            "diagnostics": self.diagnostics,
        }
        arrays = {
            "train_fit": self.train_fit,
            "u": self.u,
            "sigma2": self.sigma2,
            "sigma_u2": self.sigma_u2,
            "offsets": self.offsets,
            "chain": self.chain,
        }
        for k, v in self.forest.items():
            arrays[f"forest.{k}"] = v
        write_container(path, meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = read_container(path)
        if meta.get("kind") != "bart":
            raise InvalidInputError(f"{path}: not an additive-tree model artifact")
        forest = {
            k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("forest.")
        }
        return cls(
            mode=meta["mode"],
            config=BartConfig.from_json(meta["config"]),
            n_trees=meta["n_trees"],
            n_features=meta["n_features"],
            columns=meta["columns"],
            group_labels=meta["group_labels"],
            train_fit=arrays["train_fit"],
            u=arrays["u"],
            sigma2=arrays["sigma2"],
            sigma_u2=arrays["sigma_u2"],
            offsets=arrays["offsets"],
            chain=arrays["chain"],
            forest=forest,
            y_min=meta["y_min"],
            y_scale=meta["y_scale"],
            diagnostics=meta["diagnostics"],
        )


@dataclass
class PredictResult:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def _run_chain(chain_idx, data, config, lam, sigma2_init):
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(config.seed + chain_idx))
    )
    state = init_state(data, config, rng, lam, sigma2_init)
    pack = _ForestPack()
    fits, us, s2s, su2s, offs = [], [], [], [], []
    s2_trace, su2_trace = [], []
    for it in range(config.n_iter):
        gibbs_step(state, data, config)
        s2_trace.append(state.sigma2)
        su2_trace.append(state.sigma_u2)
        if it >= config.n_burn and (it - config.n_burn) % config.n_thin == 0:
            fits.append(state.total_fit + state.offset)
            us.append(state.u.copy())
            s2s.append(state.sigma2)
            su2s.append(state.sigma_u2)
            offs.append(state.offset)
            for tree in state.trees:
                pack.add_tree(tree.compact())
    diag = {
        "moves": state.diag["moves"],
        "refreshes": state.diag["refreshes"],
        "sigma2_trace": s2_trace,
        "sigma_u2_trace": su2_trace,
    }
    return {
        "fits": np.asarray(fits),
        "u": np.asarray(us),
        "sigma2": np.asarray(s2s),
        "sigma_u2": np.asarray(su2s),
        "offsets": np.asarray(offs),
        "pack": pack,
        "diag": diag,
    }


def fit(
    X,
    y,
    config=None,
    mode="probit",
    group_codes=None,
    n_groups=None,
    cat_features=(),
    columns=None,
    group_labels=None,
    n_threads=1,
):
    """Run the sampler; returns retained draws from all chains.

    `group_codes` switches the group-intercept part on. `cat_features` lists
    predictor indices whose splits are subset rules over observed codes.
    """
    config = config or BartConfig()
    config.validate()
    data = prepare_data(
        X, y, mode, group_codes=group_codes, n_groups=n_groups, cat_features=cat_features
    )

    if mode == "continuous":
        y_min = float(data.y.min())
        span = float(data.y.max()) - y_min
        y_scale = span if span > 0 else 1.0
        data.y = (data.y - y_min) / y_scale - 0.5
        lam, lam_fallback = calibrate_lambda(data.y, data.X, config.nu, config.q)
        sigma2_init = float(np.var(data.y))
        if sigma2_init <= 0:
            sigma2_init = max(lam, 1e-12)
    else:
        y_min, y_scale = 0.0, 1.0
        lam, lam_fallback = 0.0, False
        sigma2_init = 1.0

    results = []
    if n_threads > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(n_threads, config.n_chains)) as pool:
            futures = [
                pool.submit(_run_chain, c, data, config, lam, sigma2_init)
                for c in range(config.n_chains)
            ]
            results = [f.result() for f in futures]
    else:
        results = [
            _run_chain(c, data, config, lam, sigma2_init)
            for c in range(config.n_chains)
        ]

    merged = _merge_packs([res["pack"] for res in results])

    def to_orig(fit_model):
        if mode == "continuous":
            return (fit_model + 0.5) * y_scale + y_min
        return fit_model

    train_fit = np.concatenate([to_orig(res["fits"]) for res in results])
    u = np.concatenate([res["u"] for res in results])
    if mode == "continuous":
        u = u * y_scale
        sigma2 = np.concatenate([res["sigma2"] for res in results]) * y_scale**2
        sigma_u2 = np.concatenate([res["sigma_u2"] for res in results]) * y_scale**2
    else:
        sigma2 = np.concatenate([res["sigma2"] for res in results])
        sigma_u2 = np.concatenate([res["sigma_u2"] for res in results])
    offsets = np.concatenate([res["offsets"] for res in results])
    chain = np.concatenate(
        [np.full(res["fits"].shape[0], c, dtype=np.int32) for c, res in enumerate(results)]
    )

    diagnostics = {
        "lambda_fallback": lam_fallback,
        "lambda": lam,
        "chains": [res["diag"] for res in results],
        "acceptance": _acceptance_summary([res["diag"] for res in results]),
    }
    if group_labels is None and data.n_groups:
        group_labels = [str(i) for i in range(data.n_groups)]
    return PosteriorDraws(
        mode=mode,
        config=config,
        n_trees=config.n_trees,
        n_features=data.X.shape[1],
        columns=list(columns) if columns is not None else None,
        group_labels=list(group_labels) if group_labels else [],
        train_fit=train_fit,
        u=u if data.n_groups else u.reshape(len(chain), 0),
        sigma2=sigma2,
        sigma_u2=sigma_u2,
        offsets=offsets,
        chain=chain,
        forest=merged,
        y_min=y_min,
        y_scale=y_scale,
        diagnostics=diagnostics,
    )


def _merge_packs(packs):
    merged = _ForestPack()
    for p in packs:
        arrays = p.arrays()
        node_off = merged.n_nodes
        cat_off = merged.n_cat
        internal = arrays["feature"] >= 0
        merged.chunks["feature"].append(arrays["feature"])
        merged.chunks["threshold"].append(arrays["threshold"])
        merged.chunks["missing_left"].append(arrays["missing_left"])
        merged.chunks["left"].append(
            np.where(internal, arrays["left"] + node_off, 0).astype(np.int32)
        )
        merged.chunks["right"].append(
            np.where(internal, arrays["right"] + node_off, 0).astype(np.int32)
        )
        merged.chunks["cat_start"].append(
            np.where(arrays["cat_start"] >= 0, arrays["cat_start"] + cat_off, -1)
        )
        merged.chunks["cat_len"].append(arrays["cat_len"])
        merged.chunks["cat_codes"].append(arrays["cat_codes"])
        merged.chunks["leaf_value"].append(arrays["leaf_value"])
        merged.n_nodes += arrays["feature"].shape[0]
        merged.n_cat += arrays["cat_codes"].shape[0]
        merged.tree_start += [int(t) + node_off for t in arrays["tree_start"][1:]]
    return merged.arrays()


def _acceptance_summary(chain_diags):
    out = {}
    for move in ("grow", "prune", "change"):
        proposed = sum(d["moves"][move]["proposed"] for d in chain_diags)
        accepted = sum(d["moves"][move]["accepted"] for d in chain_diags)
        out[move] = {
            "proposed": proposed,
            "accepted": accepted,
            "rate": accepted / proposed if proposed else 0.0,
        }
    return out


def predict(
    draws,
    X_new,
    group_handling="zero",
    group_codes=None,
    seed=0,
    interval=0.90,
    columns=None,
):
    """Posterior-mean prediction with a central credible interval.

    Binary models return probabilities (normal CDF of the latent fit);
    continuous models return fits on the original response scale. Rows from
    groups unseen in training use u = 0 (`zero`) or a fresh group effect
    drawn per posterior draw (`integrate`); `known` indexes the training
    groups via `group_codes`.
    """
    X = np.ascontiguousarray(np.asarray(X_new, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != draws.n_features:
        raise SchemaMismatchError(
            f"expected {draws.n_features} predictor columns, got "
            f"{X.shape[1] if X.ndim == 2 else 'non-2D'}"
        )
    if columns is not None and draws.columns is not None and list(columns) != list(
        draws.columns
    ):
        mism = [
            f"{a!r} vs {b!r}" for a, b in zip(columns, draws.columns) if a != b
        ][:3]
        raise SchemaMismatchError(f"column schema mismatch: {', '.join(mism)}")
    if group_handling not in ("known", "zero", "integrate"):
        raise InvalidInputError(f"unknown group handling {group_handling!r}")
    if group_handling == "known":
        if group_codes is None:
            raise InvalidInputError("group_handling='known' needs group codes")
        group_codes = np.asarray(group_codes, dtype=np.int64)
        if group_codes.min() < -1 or group_codes.max() >= max(draws.u.shape[1], 1):
            raise InvalidInputError("group codes outside the training groups")
        unknown = group_codes < 0
        safe_codes = np.maximum(group_codes, 0)

    f = draws.forest
    d_total = draws.n_draws
    b = draws.n_trees
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    vals = np.empty((d_total, X.shape[0]))
    for d in range(d_total):
        fit_model = forest_fit(
            X,
            f["feature"],
            f["threshold"],
            f["missing_left"],
            f["left"],
            f["right"],
            f["cat_start"],
            f["cat_len"],
            f["cat_codes"],
            f["leaf_value"],
            f["tree_start"],
            d * b,
            (d + 1) * b,
        ) + draws.offsets[d]
        if draws.mode == "continuous":
            val = (fit_model + 0.5) * draws.y_scale + draws.y_min
        else:
            val = fit_model
        if group_handling == "known" and draws.grouping:
            val = val + np.where(unknown, 0.0, draws.u[d, safe_codes])
        elif group_handling == "integrate" and draws.grouping:
            val = val + rng.normal(0.0, math.sqrt(max(draws.sigma_u2[d], 0.0)))
        vals[d] = val
    if draws.mode == "probit":
        vals = ndtr(vals)
    alpha = (1.0 - interval) / 2.0
    return PredictResult(
        mean=vals.mean(axis=0),
        lower=np.quantile(vals, alpha, axis=0),
        upper=np.quantile(vals, 1.0 - alpha, axis=0),
    )


def fit_features(fm, config=None, mode="probit", grouping=True, n_threads=1):
    """Fit on a FeatureMatrix, wiring schema, groups, and categorical columns."""
    return fit(
        fm.X,
        fm.y if mode == "probit" else fm.y.astype(np.float64),
        config=config,
        mode=mode,
        group_codes=fm.group_codes if grouping else None,
        n_groups=len(fm.group_labels) if grouping else None,
        cat_features=fm.cat_feature_idx,
        columns=fm.columns,
        group_labels=fm.group_labels if grouping else None,
    )


def predict_features(draws, fm, group_handling="known", seed=0, interval=0.90, unknown="error"):
    """Predict rows of a FeatureMatrix, mapping its schools onto training groups.

    `unknown` controls rows from schools unseen at training time when
    `group_handling='known'`: "error" refuses, "zero" scores them with u = 0.
    """
    group_codes = None
    if group_handling == "known":
        lookup = {g: i for i, g in enumerate(draws.group_labels)}
        labels = [fm.group_labels[c] for c in fm.group_codes]
        if unknown == "zero":
            group_codes = np.asarray(
                [lookup.get(lbl, -1) for lbl in labels], dtype=np.int64
            )
        else:
            missing = next((lbl for lbl in labels if lbl not in lookup), None)
            if missing is not None:
                raise InvalidInputError(
                    f"school {missing!r} was not in the training data; "
                    "use unknown='zero' or another group handling"
                )
            group_codes = np.asarray([lookup[lbl] for lbl in labels], dtype=np.int64)
    return predict(
        draws,
        fm.X,
        group_handling=group_handling,
        group_codes=group_codes,
        seed=seed,
        interval=interval,
        columns=fm.columns,
    )
