"""Command-line pipeline: generate data, build features, fit, and report.

Every command reads an optional JSON config file with one section per
command; command-line flags override file values, which override defaults.
Tabular outputs are deterministic for a fixed seed (timestamps only appear
inside the JSON summaries' meta block).
"""

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import analyses, bart, rf
from .container import read_meta
from .entities import read_entities
from .errors import InvalidInputError
from .features import build_features, read_features, write_features
from .figures import svg_interval_chart, svg_line_chart
from .metrics import confusion_metrics
from .synth import SynthConfig, generate, write_dataset


def _load_sections(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _section(sections, name, overrides=None, seed=None):
    out = dict(sections.get(name, {}))
    if overrides:
        out.update({k: v for k, v in overrides.items() if v is not None})
    if seed is not None:
        out["seed"] = seed
    return out


def _make(cls, section, what):
    try:
        return cls(**section)
    except TypeError as exc:
        raise InvalidInputError(f"bad {what} config: {exc}") from None


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_summary(path, command, seed, payload):
    doc = {
        "meta": {
            "command": command,
            "seed": seed,
            "created": datetime.now(timezone.utc).isoformat(),
        },
        **payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _ensure_out(args):
    if not args.out:
        raise InvalidInputError("--out directory is required")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _features_for(args, sections, seed):
    """Load a features CSV, or build one from an entity directory."""
    if args.features:
        return read_features(args.features)
    if args.data:
        month = args.month if args.month is not None else 5
        return build_features(read_entities(args.data), month)
    raise InvalidInputError("need --features FILE or --data DIR")


# --- commands -----------------------------------------------------------------


def cmd_synth(args, sections):
    out = _ensure_out(args)
    section = _section(
        sections,
        "synth",
        {
            "n_students": args.n_students,
            "n_schools": args.n_schools,
            "sigma_u": args.sigma_u,
            "usage_effect": args.usage_effect,
            "noise_sd": args.noise_sd,
        },
        seed=args.seed,
    )
    for key in ("quintile_mix", "quintile_effects"):
        if key in section:
            section[key] = tuple(section[key])
    config = _make(SynthConfig, section, "synth")
    entities, truth = generate(config)
    write_dataset(out, entities, truth)
    share_fail = float(np.mean([t.score < 495.5 for t in entities.tests]))
    _write_summary(
        os.path.join(out, "synth_summary.json"),
        "synth",
        config.seed,
        {
            "n_students": config.n_students,
            "n_schools": config.n_schools,
            "n_attempt_rows": len(entities.attempts),
            "share_below_benchmark": share_fail,
            "files": sorted(
                f for f in os.listdir(out) if f.endswith((".csv", ".json"))
            ),
        },
    )
    return 0


def cmd_features(args, sections):
    out = _ensure_out(args)
    month = args.month if args.month is not None else 5
    entities = read_entities(args.data)
    fm = build_features(entities, month)
    paths = []
    if args.split:
        seed = args.seed if args.seed is not None else 0
        train_idx, test_idx = analyses.stratified_split(fm.y, args.split, seed)
        for name, rows in (("train", train_idx), ("test", test_idx)):
            path = os.path.join(out, f"features_m{month}_{name}.csv")
            write_features(path, analyses.subset_rows(fm, rows))
            paths.append(path)
    else:
        path = os.path.join(out, f"features_m{month}.csv")
        write_features(path, fm)
        paths.append(path)
    _write_summary(
        os.path.join(out, "features_summary.json"),
        "features",
        args.seed,
        {
            "month": month,
            "rows": len(fm.student_ids),
            "columns": len(fm.columns),
            "files": [os.path.basename(p) for p in paths],
        },
    )
    return 0


def cmd_fit(args, sections):
    out = _ensure_out(args)
    fm = _features_for(args, sections, args.seed)
    kind = args.model_kind
    if kind == "rf":
        config = _make(rf.RFConfig, _section(sections, "rf", seed=args.seed), "rf")
        forest = rf.fit_rf(fm.X, fm.y, config, columns=fm.columns)
        model_path = os.path.join(out, "rf_model.bin")
        forest.save(model_path)
        report = {
            "kind": "rf",
            "config": config.to_json(),
            "n_rows": int(fm.y.shape[0]),
            "oob_error": rf.oob_error(forest, fm.X, fm.y) if config.bootstrap else None,
        }
    else:
        section = _section(sections, "bart", seed=args.seed)
        if "move_probs" in section:
            section["move_probs"] = tuple(section["move_probs"])
        config = _make(bart.BartConfig, section, "bart")
        draws = bart.fit_features(
            fm,
            config,
            mode=args.mode,
            grouping=args.grouping != "off",
            n_threads=args.threads,
        )
        model_path = os.path.join(out, "bart_model.bin")
        draws.save(model_path)
        su2 = draws.sigma_u2
        report = {
            "kind": "bart",
            "mode": args.mode,
            "config": config.to_json(),
            "n_rows": int(fm.y.shape[0]),
            "n_chains": int(config.n_chains),
            "n_draws": int(draws.n_draws),
            "acceptance": draws.diagnostics["acceptance"],
            "lambda_fallback": draws.diagnostics["lambda_fallback"],
            "sigma_u2_summary": {
                "mean": float(su2.mean()),
                "q05": float(np.quantile(su2, 0.05)),
                "q95": float(np.quantile(su2, 0.95)),
            },
        }
    _write_summary(
        os.path.join(out, f"{kind}_fit_report.json"), "fit", args.seed, report
    )
    return 0


def _model_probs(model_path, fm, seed):
    """Score a features matrix with either artifact kind."""
    kind = read_meta(model_path)["kind"]
    if kind == "rf":
        forest = rf.RFForest.load(model_path)
        return rf.predict_proba_rf(forest, fm.X, columns=fm.columns), "rf"
    draws = bart.PosteriorDraws.load(model_path)
    pred = bart.predict_features(
        draws, fm, group_handling="known", unknown="zero", seed=seed or 0
    )
    return pred.mean, "bart"


def cmd_eval(args, sections):
    out = _ensure_out(args)
    if not os.path.exists(args.model):
        raise InvalidInputError(f"model artifact not found: {args.model}")
    fm = read_features(args.features)
    probs, kind = _model_probs(args.model, fm, args.seed)
    report = confusion_metrics(probs, fm.y, threshold=args.threshold)
    _write_csv(
        os.path.join(out, "metrics.csv"),
        ["measure", "value"],
        report.rows(),
    )
    _write_summary(
        os.path.join(out, "eval_summary.json"),
        "eval",
        args.seed,
        {
            "model": kind,
            "n": report.n,
            "threshold": report.threshold,
            "metrics": dict(report.rows()),
        },
    )
    return 0


def _sweep_models(sections, seed, tune_budget):
    bart_section = _section(sections, "bart", seed=seed)
    if "move_probs" in bart_section:
        bart_section["move_probs"] = tuple(bart_section["move_probs"])
    rf_section = _section(sections, "rf", seed=seed)
    bart_config = _make(bart.BartConfig, bart_section, "bart")
    rf_config = _make(rf.RFConfig, rf_section, "rf")
    models = [
        analyses.SweepModel("rf_default", "rf", rf_config),
        analyses.SweepModel("bart_default", "bart", bart_config),
    ]
    if tune_budget:
        models.append(
            analyses.SweepModel(
                "rf_tuned",
                "rf",
                rf_config,
                tune_space=analyses.RF_SEARCH_SPACE,
                tune_budget=tune_budget,
            )
        )
        models.append(
            analyses.SweepModel(
                "bart_tuned",
                "bart",
                bart_config,
                tune_space=analyses.BART_SEARCH_SPACE,
                tune_budget=tune_budget,
            )
        )
    return models


def cmd_sweep(args, sections):
    out = _ensure_out(args)
    entities = read_entities(args.data)
    months = _parse_months(args.months)
    seed = args.seed if args.seed is not None else 0
    sweep_cfg = _section(sections, "sweep")
    tune_budget = args.tune_budget
    if tune_budget is None:
        tune_budget = sweep_cfg.get("tune_budget", 0)
    models = _sweep_models(sections, seed, tune_budget)
    result = analyses.month_sweep(
        entities, models, months=months, test_frac=args.test_frac, seed=seed
    )
    rows = sorted(
        ((r["model"], r["month"], r["auc"], r["error"]) for r in result.rows),
        key=lambda r: (r[0], r[1]),
    )
    _write_csv(os.path.join(out, "sweep.csv"), ["model", "month", "auc", "error"], rows)
    series = []
    for model in sorted({r["model"] for r in result.rows}):
        pts = [
            (r["month"], r["auc"])
            for r in result.rows
            if r["model"] == model and r["auc"] is not None
        ]
        if pts:
            series.append((model, sorted(pts)))
    svg_line_chart(
        os.path.join(out, "sweep.svg"),
        series,
        "Test AUC by feature cutoff month",
        "cutoff month",
        "AUC",
    )
    _write_summary(
        os.path.join(out, "sweep_summary.json"),
        "sweep",
        seed,
        {
            "months": months,
            "models": [m.name for m in models],
            "cells": len(result.rows),
            "failed": sum(1 for r in result.rows if r["auc"] is None),
        },
    )
    return 0


def cmd_ranef(args, sections):
    out = _ensure_out(args)
    draws = bart.PosteriorDraws.load(args.model)
    entities = read_entities(args.data)
    quintiles = {}
    for s in entities.students:
        quintiles.setdefault(s.school_id, s.quintile)
    report = analyses.ranef_report(draws, quintiles)
    rows = sorted(
        (r["school"], r["mean"], r["sd"], r["quintile"], r["flag"])
        for r in report.rows
    )
    _write_csv(
        os.path.join(out, "ranef.csv"),
        ["school", "mean", "sd", "quintile", "flag"],
        rows,
    )
    _write_summary(
        os.path.join(out, "ranef_summary.json"),
        "ranef",
        args.seed,
        {
            "schools": len(report.rows),
            "positive": len(report.flagged("positive")),
            "negative": len(report.flagged("negative")),
            "null": len(report.flagged("null")),
        },
    )
    return 0


def cmd_profiles(args, sections):
    out = _ensure_out(args)
    draws = bart.PosteriorDraws.load(args.model)
    fm = read_features(args.features)
    seed = args.seed if args.seed is not None else 0
    grid = analyses.profile_grid(fm, draws, seed=seed)
    rows = [
        (r["usage"], r["quintile"], r["probability"], r["lower"], r["upper"])
        for r in grid.rows
    ]
    _write_csv(
        os.path.join(out, "profiles.csv"),
        ["usage", "quintile", "probability", "lower", "upper"],
        rows,
    )
    groups = []
    for usage in analyses.USAGE_LEVELS:
        pts = [
            (r["quintile"], r["probability"], r["lower"], r["upper"])
            for r in grid.rows
            if r["usage"] == usage
        ]
        groups.append((usage, pts))
    svg_interval_chart(
        os.path.join(out, "profiles.svg"),
        groups,
        "Success probability by usage profile and quintile",
        "quintile",
        "probability",
    )
    _write_summary(
        os.path.join(out, "profiles_summary.json"),
        "profiles",
        seed,
        {"rows": len(grid.rows)},
    )
    return 0


def cmd_tune(args, sections):
    out = _ensure_out(args)
    fm = _features_for(args, sections, args.seed)
    seed = args.seed if args.seed is not None else 0
    kind = args.model_kind
    if kind == "rf":
        space = analyses.RF_SEARCH_SPACE
        base = _make(rf.RFConfig, _section(sections, "rf", seed=seed), "rf")
    else:
        section = _section(sections, "bart", seed=seed)
        if "move_probs" in section:
            section["move_probs"] = tuple(section["move_probs"])
        space = analyses.BART_SEARCH_SPACE
        base = _make(bart.BartConfig, section, "bart")
    space = _section(sections, "tune").get("space", space)
    space = {k: tuple(v) if isinstance(v, list) else v for k, v in space.items()}
    result = analyses.tune(kind, space, args.budget, fm, seed=seed, base_config=base)
    trace_rows = []
    param_names = sorted(space)
    for i, t in enumerate(result.trace):
        trace_rows.append(
            [i] + [t["params"].get(k) for k in param_names] + [t["auc"], t["error"]]
        )
    _write_csv(
        os.path.join(out, "tune_trace.csv"),
        ["trial"] + param_names + ["auc", "error"],
        trace_rows,
    )
    with open(os.path.join(out, "tune_best.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "kind": kind,
                "best_auc": result.best_auc,
                "best_config": result.best_config.to_json(),
            },
            fh,
            sort_keys=True,
            indent=1,
        )
        fh.write("\n")
    _write_summary(
        os.path.join(out, "tune_summary.json"),
        "tune",
        seed,
        {"kind": kind, "budget": args.budget, "best_auc": result.best_auc},
    )
    return 0


def _parse_months(spec):
    if not spec:
        return list(range(3, 12))
    if "-" in spec:
        lo, hi = spec.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(m) for m in spec.split(",")]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="edubart",
        description="Early-warning models over LMS usage data: synthetic data, "
        "features, additive-tree and random-forest fits, and reports.",
    )
    parser.add_argument("--config", help="JSON config file with per-command sections")
    parser.add_argument("--seed", type=int, help="override every section's seed")
    parser.add_argument("--threads", type=int, default=1, help="worker cap")
    parser.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n-students", type=int)
    p.add_argument("--n-schools", type=int)
    p.add_argument("--sigma-u", type=float)
    p.add_argument("--usage-effect", type=float)
    p.add_argument("--noise-sd", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="build the monthly feature matrix")
    p.add_argument("--data", required=True, help="entity file directory")
    p.add_argument("--month", type=int, help="cutoff month 3..11 (default 5)")
    p.add_argument("--split", type=float, help="test fraction; writes train/test")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("fit", help="fit a model and save its artifact")
    p.add_argument("--model-kind", choices=("bart", "rf"), default="bart")
    p.add_argument("--features", help="features CSV from the features command")
    p.add_argument("--data", help="entity directory (builds features on the fly)")
    p.add_argument("--month", type=int)
    p.add_argument("--mode", choices=("probit", "continuous"), default="probit")
    p.add_argument("--grouping", choices=("on", "off"), default="on")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score a fitted model on a features file")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="AUC by cutoff month for each model variant")
    p.add_argument("--data", required=True)
    p.add_argument("--months", help="e.g. 3-11 or 3,5,11 (default 3-11)")
    p.add_argument("--test-frac", type=float, default=0.25)
    p.add_argument("--tune-budget", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ranef", help="school-effect report from a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_ranef)

    p = sub.add_parser("profiles", help="counterfactual usage-profile grid")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="training features CSV")
    p.set_defaults(func=cmd_profiles)

    p = sub.add_parser("tune", help="random hyperparameter search")
    p.add_argument("--model-kind", choices=("bart", "rf"), default="rf")
    p.add_argument("--features")
    p.add_argument("--data")
    p.add_argument("--month", type=int)
    p.add_argument("--budget", type=int, default=10)
    p.set_defaults(func=cmd_tune)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    sections = _load_sections(args.config)
    try:
        return args.func(args, sections)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
