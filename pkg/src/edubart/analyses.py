"""The four headline analyses over a fitted pipeline.

- early-warning sweep: test AUC of each model variant as the feature cutoff
  month moves from March to November, on one fixed student-level split;
- school-effect report: posterior mean/sd of each school's intercept with a
  one-sd flagging rule;
- counterfactual usage profiles: predicted success probability for synthetic
  students at low/median/high usage crossed with the five quintiles;
- hyperparameter search: uniform random search scored by validation AUC.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import bart, rf
from .errors import InvalidInputError
from .features import FeatureMatrix, MONTH_HI, MONTH_LO, build_features
from .metrics import roc_auc

USAGE_LEVELS = ("p10", "p50", "p90")
USAGE_PERCENTILES = {"p10": 10.0, "p50": 50.0, "p90": 90.0}


def stratified_split(y, test_frac=0.25, seed=0):
    """Deterministic stratified train/test row split."""
    y = np.asarray(y)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 7))))
    train, test = [], []
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(idx.shape[0])]
        n_test = int(round(idx.shape[0] * test_frac))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def subset_rows(fm, rows):
    return FeatureMatrix(
        X=fm.X[rows].copy(),
        columns=list(fm.columns),
        col_kind=list(fm.col_kind),
        usage_cols=list(fm.usage_cols),
        cat_maps=fm.cat_maps,
        y=fm.y[rows].copy(),
        group_codes=fm.group_codes[rows].copy(),
        group_labels=list(fm.group_labels),
        student_ids=[fm.student_ids[i] for i in rows],
        month=fm.month,
        extra=dict(fm.extra),
    )


def slice_month(fm, month):
    """Restrict a matrix built at a later cutoff to the columns of `month`.

    Cumulative columns are identical across cutoffs, so slicing equals
    rebuilding at the smaller cutoff.
    """
    if month > fm.month:
        raise InvalidInputError(f"matrix was built at month {fm.month} < {month}")
    keep = [
        i
        for i, name in enumerate(fm.columns)
        if "_" not in name or not name.rsplit("_", 1)[1].isdigit()
        or int(name.rsplit("_", 1)[1]) <= month
    ]
    return FeatureMatrix(
        X=fm.X[:, keep].copy(),
        columns=[fm.columns[i] for i in keep],
        col_kind=[fm.col_kind[i] for i in keep],
        usage_cols=[fm.usage_cols[i] for i in keep],
        cat_maps={
            k: v
            for k, v in fm.cat_maps.items()
            if k in {fm.columns[i] for i in keep}
        },
        y=fm.y,
        group_codes=fm.group_codes,
        group_labels=list(fm.group_labels),
        student_ids=list(fm.student_ids),
        month=month,
        extra=dict(fm.extra),
    )


# --- model plumbing shared by sweep / tune ----------------------------------


def _fit_and_score(kind, config, train_fm, test_fm, bart_draw_seed=0):
    """Fit one model variant and return its test AUC."""
    if kind == "rf":
        forest = rf.fit_rf(train_fm.X, train_fm.y, config, columns=train_fm.columns)
        probs = rf.predict_proba_rf(forest, test_fm.X, columns=test_fm.columns)
    elif kind == "bart":
        draws = bart.fit_features(train_fm, config, mode="probit", grouping=True)
        probs = bart.predict_features(
            draws, test_fm, group_handling="known", unknown="zero", seed=bart_draw_seed
        ).mean
    else:
        raise InvalidInputError(f"unknown model kind {kind!r}")
    return roc_auc(probs, test_fm.y)


@dataclass
class SweepModel:
    name: str
    kind: str  # "rf" | "bart"
    config: object = None
    tune_space: dict | None = None  # set to run random search per month
    tune_budget: int = 0


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)  # dicts: model, month, auc, error

    def auc(self, model, month):
        for r in self.rows:
            if r["model"] == model and r["month"] == month:
                return r["auc"]
        raise KeyError((model, month))


def month_sweep(entities, models, months=None, test_frac=0.25, seed=0):
    """Test AUC per (model variant, cutoff month) on one fixed student split."""
    months = list(months) if months is not None else list(range(MONTH_LO, MONTH_HI + 1))
    full = build_features(entities, max(months))
    train_idx, test_idx = stratified_split(full.y, test_frac, seed)
    result = SweepResult()
    for month in months:
        sliced = slice_month(full, month)
        train_fm = subset_rows(sliced, train_idx)
        test_fm = subset_rows(sliced, test_idx)
        for model in models:
            config = model.config
            try:
                if model.tune_budget and model.tune_space:
                    tuned = tune(
                        model.kind,
                        model.tune_space,
                        model.tune_budget,
                        train_fm,
                        seed=seed,
                        base_config=config,
                    )
                    config = tuned.best_config
                auc = _fit_and_score(model.kind, config, train_fm, test_fm)
                result.rows.append(
                    {"model": model.name, "month": month, "auc": float(auc), "error": ""}
                )
            except Exception as exc:  # a failed cell must not kill the sweep
                result.rows.append(
                    {"model": model.name, "month": month, "auc": None, "error": str(exc)}
                )
    return result


# --- random search -----------------------------------------------------------

BART_SEARCH_SPACE = {
    "n_trees": (50, 400),
    "k": (1.0, 5.0),
    "alpha": (0.5, 0.99),
    "beta": (1.0, 3.0),
}
RF_SEARCH_SPACE = {
    "n_trees": (200, 1000),
    "mtry": (1, "p"),
    "min_node_size": (1, 50),
}


@dataclass
class TuneResult:
    best_config: object
    best_auc: float
    trace: list  # dicts: params, auc, error


def _sample_params(space, p, rng):
    params = {}
    for name, bounds in space.items():
        lo, hi = bounds
        if hi == "p":
            hi = p
        if isinstance(lo, int) and isinstance(hi, int):
            params[name] = int(rng.integers(lo, hi + 1))
        else:
            params[name] = float(rng.uniform(lo, hi))
    return params


def tune(kind, space, budget, train_fm, seed=0, val_frac=0.25, base_config=None):
    """Uniform random search over `space`, scored by validation AUC."""
    if budget < 1:
        raise InvalidInputError("tuning budget must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 13))))
    sub_train_idx, val_idx = stratified_split(train_fm.y, val_frac, seed + 1)
    sub_train = subset_rows(train_fm, sub_train_idx)
    val = subset_rows(train_fm, val_idx)
    trace = []
    best = None
    for trial in range(budget):
        params = _sample_params(space, train_fm.X.shape[1], rng)
        config = _make_config(kind, params, base_config)
        try:
            auc = float(_fit_and_score(kind, config, sub_train, val))
            trace.append({"params": params, "auc": auc, "error": ""})
            if best is None or auc > best[0]:
                best = (auc, config)
        except Exception as exc:
            trace.append({"params": params, "auc": None, "error": str(exc)})
    if best is None:
        raise InvalidInputError(f"every tuning evaluation failed: {trace}")
    return TuneResult(best_config=best[1], best_auc=best[0], trace=trace)


def _make_config(kind, params, base_config):
    if kind == "rf":
        config = rf.RFConfig(**(base_config.to_json() if base_config else {}))
    else:
        config = bart.BartConfig(**(base_config.to_json() if base_config else {}))
        if isinstance(config.move_probs, list):
            config.move_probs = tuple(config.move_probs)
    for name, value in params.items():
        setattr(config, name, value)
    return config


# --- school effects ----------------------------------------------------------


@dataclass
class RanefReport:
    rows: list  # dicts: school, mean, sd, quintile, flag

    def flagged(self, flag):
        return [r for r in self.rows if r["flag"] == flag]


def ranef_report(draws, school_quintiles):
    """Posterior mean/sd of each school intercept with one-sd flagging.

    A school is flagged positive when mean - sd > 0, negative when
    mean + sd < 0, and null otherwise. `school_quintiles` maps school id to
    its quintile; schools missing from it are skipped with a warning.
    """
    if not draws.grouping:
        raise InvalidInputError("the model was fitted without group intercepts")
    rows = []
    for gi, school in enumerate(draws.group_labels):
        if school not in school_quintiles:
            warnings.warn(f"school {school!r} missing from metadata; skipped")
            continue
        u = draws.u[:, gi]
        mean = float(u.mean())
        sd = float(u.std())
        if mean - sd > 0:
            flag = "positive"
        elif mean + sd < 0:
            flag = "negative"
        else:
            flag = "null"
        rows.append(
            {
                "school": school,
                "mean": mean,
                "sd": sd,
                "quintile": int(school_quintiles[school]),
                "flag": flag,
            }
        )
    return RanefReport(rows=rows)


# --- counterfactual usage profiles --------------------------------------------


@dataclass
class ProfileGrid:
    rows: list  # dicts: usage, quintile, probability, lower, upper

    def probability(self, usage, quintile):
        for r in self.rows:
            if r["usage"] == usage and r["quintile"] == quintile:
                return r["probability"]
        raise KeyError((usage, quintile))


def profile_grid(train_fm, draws, seed=0, interval=0.90):
    """15 synthetic students: usage {p10,p50,p90} crossed with quintiles 1..5.

    Usage columns (numeric monthly blocks) are set to their empirical
    percentile over the training matrix; department, zone, and class are held
    at their most common training value; school effects are integrated over.
    """
    cols = train_fm.columns
    quintile_col = cols.index("quintile")
    base = np.empty(len(cols))
    for j, name in enumerate(cols):
        col = train_fm.X[:, j]
        obs = col[~np.isnan(col)]
        if train_fm.usage_cols[j]:
            base[j] = np.nan  # filled per usage level below
        elif obs.shape[0] == 0:
            base[j] = np.nan
        elif train_fm.col_kind[j] == "cat" or name == "zone":
            vals, counts = np.unique(obs, return_counts=True)
            base[j] = vals[np.argmax(counts)]
        else:
            base[j] = float(np.median(obs))

    grid = np.tile(base, (15, 1))
    meta = []
    r = 0
    for usage in USAGE_LEVELS:
        pct = USAGE_PERCENTILES[usage]
        for quintile in range(1, 6):
            for j in range(len(cols)):
                if not train_fm.usage_cols[j]:
                    continue
                col = train_fm.X[:, j]
                obs = col[~np.isnan(col)]
                # an all-missing column stays missing
                grid[r, j] = np.percentile(obs, pct) if obs.shape[0] else np.nan
            grid[r, quintile_col] = float(quintile)
            meta.append((usage, quintile))
            r += 1

    pred = bart.predict(
        draws,
        grid,
        group_handling="integrate",
        seed=seed,
        interval=interval,
        columns=cols,
    )
    rows = [
        {
            "usage": usage,
            "quintile": quintile,
            "probability": float(pred.mean[i]),
            "lower": float(pred.lower[i]),
            "upper": float(pred.upper[i]),
        }
        for i, (usage, quintile) in enumerate(meta)
    ]
    return ProfileGrid(rows=rows)
