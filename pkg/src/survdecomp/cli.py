"""Command-line entry points: decompose, train, lab, compare, km (and synth).

Exit codes: 0 success, 2 input error, 3 numerical failure.  Every report
echoes its resolved configuration.  Options may also come from ``--config``
(a JSON object or ``key=value`` lines); command-line flags win.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._util import atomic_write
from .concordance import (
    ConcordanceError,
    count_pairs,
    decompose,
    format_predictions,
    read_predictions,
    report,
)
from .dataset import (
    DatasetError,
    SurvivalDataset,
    apply_preprocess,
    fit_preprocess,
    load_csv,
    split_holdout,
    write_csv,
)
from .kaplan_meier import km_estimate
from .lab import (
    KINDS,
    ConstantPredictor,
    ExperimentError,
    ExperimentSpec,
    FixedPredictions,
    SurvedPredictor,
    compare_models,
    fold_metrics,
    grid_csv,
    read_results_csv,
    run_experiment_grid,
    summarize_grid,
    write_summary_json,
)
from .losses import LossWeights
from .surved import ModelConfig, SurvedModel, TrainingDiverged, dumps_checkpoint, fit, predict

INPUT_ERRORS = (DatasetError, ConcordanceError, ExperimentError, ValueError, KeyError, OSError)


class UsageError(Exception):
    pass


DEFAULTS = {
    "decompose": {"time_col": "time", "event_col": "event", "pairs_mode": "fast", "equal_time_comparable": True},
    "train": {
        "time_col": "time",
        "event_col": "event",
        "drop_cols": "",
        "seed": 0,
        "val_frac": 0.1,
        "power": 0.5,
        "epochs": 100,
        "patience": 10,
        "hidden": "32,32",
        "latent": 4,
        "n_samples": 200,
        "lr": 0.01,
        "momentum": 0.9,
        "batch_size": 64,
        "lambda_e": 1.0,
        "lambda_c": 1.0,
        "lambda_kl": 0.01,
        "lambda_lb": 1.0,
    },
    "lab": {
        "time_col": "time",
        "event_col": "event",
        "drop_cols": "",
        "experiment": [],
        "targets": "",
        "predictor": [],
        "folds": 100,
        "train_frac": 0.9,
        "test_frac": 0.3,
        "seed": 0,
        "power": 0.5,
        "epochs": 100,
    },
    "compare": {"level": 0.05},
    "km": {"time_col": "time", "event_col": "event"},
    "synth": {"kind": "nonlinear", "n": 2000, "censor_frac": 0.3, "seed": 0},
}


def _read_config_file(path):
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if stripped.startswith("{"):
        return json.loads(stripped)
    out = {}
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise UsageError(f"config line {ln!r} is not key=value")
        k, v = ln.split("=", 1)
        v = v.strip()
        try:
            out[k.strip().replace("-", "_")] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip().replace("-", "_")] = v
    return out


def _resolve(ns, command):
    """Merge defaults < config file < explicit flags."""
    merged = dict(DEFAULTS[command])
    if getattr(ns, "config", None):
        file_cfg = _read_config_file(ns.config)
        unknown = set(file_cfg) - set(merged)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in DEFAULTS[command]:
        val = getattr(ns, key, None)
        if val is not None and val != []:
            merged[key] = val
    return merged


def _emit(obj, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(obj, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------


def cmd_decompose(ns):
    cfg = _resolve(ns, "decompose")
    cfg.update(dataset=ns.dataset, predictions=ns.predictions)
    data = load_csv(ns.dataset, cfg["time_col"], cfg["event_col"])
    pred = read_predictions(ns.predictions)
    if len(pred) != len(data):
        raise UsageError(f"{len(pred)} predictions for {len(data)} dataset rows")
    counts = count_pairs(data, pred, cfg["pairs_mode"], cfg["equal_time_comparable"])
    out = report(counts, decompose(counts))
    out["config"] = cfg
    _emit(out)
    return 0


def _model_config(cfg, input_dim):
    weights = LossWeights(cfg["lambda_e"], cfg["lambda_c"], cfg["lambda_kl"], cfg["lambda_lb"])
    hidden = cfg["hidden"]
    if isinstance(hidden, str):
        hidden = [int(h) for h in hidden.split(",") if h.strip()]
    return ModelConfig(
        input_dim=input_dim,
        hidden_widths=tuple(hidden),
        latent_dim=int(cfg["latent"]),
        n_samples=int(cfg["n_samples"]),
        weights=weights,
        learning_rate=float(cfg["lr"]),
        momentum=float(cfg["momentum"]),
        batch_size=int(cfg["batch_size"]),
        max_epochs=int(cfg["epochs"]),
        patience=int(cfg["patience"]),
        seed=int(cfg["seed"]),
    )


def cmd_train(ns):
    cfg = _resolve(ns, "train")
    cfg.update(dataset=ns.dataset, out_dir=ns.out_dir)
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    data = _load(ns.dataset, cfg)
    train, val = split_holdout(data, cfg["val_frac"], cfg["seed"])
    plan = fit_preprocess(train, cfg["power"])
    tr, va, full = (apply_preprocess(plan, d) for d in (train, val, data))
    config = _model_config(cfg, tr.covariates.shape[1])
    model = SurvedModel(config)
    try:
        model, history = fit(model, tr, va) if config.max_epochs > 0 else (model, [])
    except TrainingDiverged as exc:
        dump = out_dir / "diverged_state.json"
        exc.dump(dump)
        print(f"error: training diverged ({exc}); state dumped to {dump}", file=sys.stderr)
        return 3

    val_pred = predict(model, va.features())
    counts = count_pairs(va, val_pred)
    val_ci = decompose(counts).ci

    files = {
        "checkpoint": out_dir / "checkpoint.json",
        "predictions": out_dir / "predictions.txt",
        "validation": out_dir / "validation.csv",
        "validation_predictions": out_dir / "validation_predictions.txt",
        "log": out_dir / "train_log.jsonl",
    }
    atomic_write(files["checkpoint"], dumps_checkpoint(model, {"preprocess": plan.to_dict(), "run": cfg}) + "\n")
    atomic_write(files["predictions"], format_predictions(predict(model, full.features())))
    write_csv(val, files["validation"], cfg["time_col"], cfg["event_col"])
    atomic_write(files["validation_predictions"], format_predictions(val_pred))
    atomic_write(files["log"], "".join(json.dumps(h, sort_keys=True) + "\n" for h in history))
    _emit(
        {
            "config": cfg,
            "epochs_run": len(history),
            "validation_ci": val_ci,
            "files": {k: str(v) for k, v in files.items()},
        }
    )
    return 0


def _drop_column(data, name):
    names = [c.name for c in data.schema]
    if name not in names:
        raise UsageError(f"dataset has no column {name!r}")
    j = names.index(name)
    values = np.asarray(data.covariates[:, j], dtype=float)
    keep = [k for k in range(len(names)) if k != j]
    reduced = SurvivalDataset(
        data.time, data.event, data.covariates[:, keep], tuple(data.schema[k] for k in keep), data.ids
    )
    return reduced, values


def _load(path, cfg):
    data = load_csv(path, cfg["time_col"], cfg["event_col"])
    drop = cfg.get("drop_cols") or ""
    names = drop if isinstance(drop, list) else [c.strip() for c in drop.split(",") if c.strip()]
    for name in names:
        data, _ = _drop_column(data, name)
    return data


def _parse_targets(text):
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).split(",") if t.strip()]


def cmd_lab(ns):
    cfg = _resolve(ns, "lab")
    cfg.update(dataset=ns.dataset)
    experiments = cfg["experiment"] or []
    targets = _parse_targets(cfg["targets"])
    if not experiments or not targets:
        raise UsageError("need at least one --experiment and one target")
    predictor_args = cfg["predictor"] or ["constant"]
    data = _load(ns.dataset, cfg)

    predictors = {}
    for arg in predictor_args:
        if arg == "constant":
            predictors["constant"] = ConstantPredictor()
        elif arg == "surved":
            predictors["surved"] = SurvedPredictor(power=cfg["power"], max_epochs=int(cfg["epochs"]))
        elif arg.startswith("oracle:"):
            data, values = _drop_column(data, arg.split(":", 1)[1])
            predictors["oracle"] = FixedPredictions(values)
        elif "=" in arg:
            name, path = arg.split("=", 1)
            predictors[name] = FixedPredictions(read_predictions(path))
        else:
            raise UsageError(f"unknown predictor {arg!r}")
    for p in predictors.values():
        if isinstance(p, FixedPredictions) and len(p.values) != len(data):
            raise UsageError("prediction file length does not match the dataset")

    specs = [ExperimentSpec(kind, t, int(cfg["seed"])) for kind in experiments for t in targets]
    rows = run_experiment_grid(
        data, specs, predictors, int(cfg["folds"]), cfg["train_frac"], cfg["test_frac"], int(cfg["seed"])
    )
    text = grid_csv(rows)
    if ns.out_csv:
        atomic_write(ns.out_csv, text)
    else:
        sys.stdout.write(text)
    if ns.out_json:
        write_summary_json(summarize_grid(rows), ns.out_json, cfg)
    return 0


def cmd_compare(ns):
    cfg = _resolve(ns, "compare")
    cfg.update(results=list(ns.results))
    results = {}
    for path in ns.results:
        rows = read_results_csv(path)
        stem = Path(path).stem
        names = sorted({r.get("predictor") for r in rows if r.get("predictor") is not None})
        if len(names) > 1:
            for name in names:
                results[f"{stem}:{name}"] = fold_metrics([r for r in rows if r.get("predictor") == name])
        else:
            results[stem] = fold_metrics(rows)
    summary = compare_models(results, cfg["level"])
    out = summary.to_dict()
    out["config"] = cfg
    _emit(out)
    return 0


def cmd_km(ns):
    cfg = _resolve(ns, "km")
    data = load_csv(ns.dataset, cfg["time_col"], cfg["event_col"])
    text = km_estimate(data.time, data.event).to_csv(ns.out)
    if not ns.out:
        sys.stdout.write(text)
    return 0


def cmd_synth(ns):
    from .synthetic import make_nonlinear, make_support_like

    cfg = _resolve(ns, "synth")
    if cfg["kind"] == "support":
        data, latent = make_support_like(seed=int(cfg["seed"]))
    elif cfg["kind"] == "nonlinear":
        data, latent = make_nonlinear(int(cfg["n"]), float(cfg["censor_frac"]), int(cfg["seed"]))
    else:
        raise UsageError(f"unknown synthetic kind {cfg['kind']!r}")
    write_csv(data, ns.out, extra={"latent_time": latent})
    return 0


# -- parser -------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="survdecomp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, drop=False):
        p.add_argument("--config", help="JSON or key=value file; flags override it")
        p.add_argument("--time-col", dest="time_col")
        p.add_argument("--event-col", dest="event_col")
        if drop:
            p.add_argument("--drop-cols", dest="drop_cols", help="comma-separated covariates to ignore")

    p = sub.add_parser("decompose", help="C-index decomposition of a prediction file")
    p.add_argument("dataset")
    p.add_argument("predictions")
    common(p)
    p.add_argument("--pairs-mode", dest="pairs_mode", choices=("fast", "exact"))
    p.add_argument(
        "--equal-time-incomparable",
        dest="equal_time_comparable",
        action="store_const",
        const=False,
        help="treat an event and a censoring at the same time as not comparable",
    )
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="train SurVED and write checkpoint, predictions and log")
    p.add_argument("dataset")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    common(p, drop=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--val-frac", dest="val_frac", type=float)
    p.add_argument("--power", type=float, help="target power-transform exponent")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--hidden", help="comma-separated hidden widths")
    p.add_argument("--latent", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    for name in ("lambda_e", "lambda_c", "lambda_kl", "lambda_lb"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lab", help="size/censoring experiment grid")
    p.add_argument("dataset")
    common(p, drop=True)
    p.add_argument("--experiment", action="append", choices=KINDS)
    p.add_argument("--targets", help="comma-separated target fractions")
    p.add_argument(
        "--predictor",
        action="append",
        help="constant | surved | oracle:COLUMN | NAME=PREDICTIONS_FILE (repeatable)",
    )
    p.add_argument("--folds", type=int)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--test-frac", dest="test_frac", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--power", type=float)
    p.add_argument("--epochs", type=int, help="max epochs for the surved predictor")
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-json", dest="out_json")
    p.set_defaults(func=cmd_lab)

    p = sub.add_parser("compare", help="pairwise Wilcoxon comparison of fold results")
    p.add_argument("results", nargs="+", help="result CSV files (grid format)")
    p.add_argument("--config")
    p.add_argument("--level", type=float)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("km", help="Kaplan-Meier curve of a dataset as time,survival CSV")
    p.add_argument("dataset")
    common(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_km)

    p = sub.add_parser("synth", help="write a synthetic dataset with a latent_time column")
    p.add_argument("kind", nargs="?", choices=("nonlinear", "support"))
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--censor-frac", dest="censor_frac", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (UsageError, *INPUT_ERRORS) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 2


def main_entry():
    sys.exit(main())
