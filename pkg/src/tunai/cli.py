"""Command-line frontend: synth, build, train, eval, predict.

Exit codes: 0 ok, 2 input or schema problem, 3 training failure, 4 model and
dataset disagree.

Randomness flows from ``--seed``: the train/test split draws from
``default_rng([seed, SPLIT_STREAM])``, CV folds from ``[seed, CV_STREAM]``,
tree or stage i of a model from ``[seed, i]`` and permutation importance for
feature j, repeat r from ``[seed, j, r]``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np
import pandas as pd

from . import __version__
from .evaluation import (ConfusionMatrix, atomic_write, f1, format_table, mae,
                         permutation_importance, stratified_split, write_table)
from .features import (CLASS_NAMES, FeatureError, Level, Task, compute_medians,
                       dataset_frame, design_matrix, labels, read_dataset, window_size,
                       write_dataset)
from .ingest import SchemaError, file_digest, read_echograms, read_grid, read_logbook
from .learn.grids import GridError, grid_for
from .learn.model import (BASELINE_FEATURES, ModelFormatError, TrainedModel, load_model,
                          metric_for, score_model, search)
from .learn.model import SchemaError as ModelSchemaError
from .pipeline import WINDOW_HOURS, build_dataset

SPLIT_STREAM = 7001
CV_STREAM = 7002
EXIT_OK, EXIT_INPUT, EXIT_TRAIN, EXIT_EVAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- manifest ------------------------------------------------------------------

def _digest(path):
    return file_digest(path) if path and os.path.isfile(path) else None


def write_manifest(path, command, args, seeds, inputs, outputs, started):
    conf = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    doc = {
        "command": command,
        "version": __version__,
        "config": conf,
        "config_hash": hashlib.sha256(json.dumps(conf, sort_keys=True, default=str).encode()).hexdigest(),
        "seeds": seeds,
        "inputs": {p: _digest(p) for p in inputs if p},
        "outputs": {p: _digest(p) for p in outputs if p},
        "seconds": round(time.time() - started, 3),
    }
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _jobs(n):
    return n if n and n > 0 else (os.cpu_count() or 1)


# -- synth ---------------------------------------------------------------------

def cmd_synth(args):
    from .synth import SynthConfig, generate
    t0 = time.time()
    kw = dict(seed=args.seed, n_buoys=args.buoys, days=args.days)
    if args.set_bias is not None:
        kw["set_bias"] = args.set_bias
    if args.violation_rate is not None:
        kw["violation_rates"] = {r: args.violation_rate for r in (1, 3, 4, 5)}
    try:
        cfg = SynthConfig(**kw)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INPUT)
    world = generate(cfg)
    paths = world.write(args.out)
    print(f"{len(world.events)} events, {len(world.tracks)} buoys -> {args.out}")
    write_manifest(os.path.join(args.out, "manifest.json"), "synth", args, {"seed": args.seed},
                   [], list(paths.values()), t0)


# -- build ---------------------------------------------------------------------

def _read_inputs(args):
    for p in (args.logbook, args.echo, args.ocean, args.bathy):
        if not os.path.isfile(p):
            raise CliError(f"{p}: no such file", EXIT_INPUT)
    events, rej_l = read_logbook(args.logbook)
    records, rej_e = read_echograms(args.echo)
    ocean = read_grid(args.ocean, "ocean")
    bathy = read_grid(args.bathy, "bathy")
    return events, records, ocean, bathy, rej_l, rej_e


def cmd_build(args):
    t0 = time.time()
    events, records, ocean, bathy, rej_l, rej_e = _read_inputs(args)
    examples, report = build_dataset(events, records, ocean, bathy, args.window)
    df = dataset_frame(examples, args.window)
    split = np.full(len(df), "train", dtype=object)
    if len(df):
        try:
            _, te = stratified_split(df["kind"].to_numpy(), args.test_frac,
                                     [args.seed, SPLIT_STREAM])
        except ValueError as exc:
            raise CliError(f"cannot split dataset: {exc}", EXIT_INPUT)
        split[te] = "test"
    df.insert(3, "split", split)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "dataset.csv")
    tmp = out + ".tmp"
    write_dataset(df, tmp)
    os.replace(tmp, out)
    rows = [[k, v] for k, v in report.counts.items()]
    rows += [["survivors", len(report.survivors)], ["input", report.n_input]]
    base = os.path.join(args.out, "clean_report")
    write_table(base, ["rule", "dropped"], rows)
    rej_rows = [["logbook", r.line, r.reason] for r in rej_l] + [["echo", r.line, r.reason] for r in rej_e]
    write_table(os.path.join(args.out, "rejects"), ["file", "line", "reason"], rej_rows)
    print(report.table())
    print(f"rejected rows: logbook {len(rej_l)}, echo {len(rej_e)}")
    print(f"{len(df)} examples at W={args.window} -> {out}")
    write_manifest(os.path.join(args.out, "manifest.json"), "build", args,
                   {"seed": args.seed, "split_stream": [args.seed, SPLIT_STREAM]},
                   [args.logbook, args.echo, args.ocean, args.bathy],
                   [out, base + ".csv", base + ".txt"], t0)


# -- train ---------------------------------------------------------------------

def _load_dataset(path):
    if not os.path.isfile(path):
        raise CliError(f"{path}: no such file", EXIT_INPUT)
    df = read_dataset(path)
    for c in ("event_id", "y", "kind"):
        if c not in df.columns:
            raise CliError(f"{path}: dataset lacks column {c!r}", EXIT_INPUT)
    return df


def _rows(df, split):
    if split == "all" or "split" not in df.columns:
        return df.reset_index(drop=True)
    return df[df["split"] == split].reset_index(drop=True)


def cmd_train(args):
    t0 = time.time()
    df = _rows(_load_dataset(args.dataset), "train")
    if len(df) == 0:
        raise CliError("no training rows", EXIT_INPUT)
    task = Task(args.task)
    try:
        if args.model == "baseline":
            missing = [c for c in BASELINE_FEATURES if c not in df.columns]
            if missing:
                raise FeatureError(f"dataset lacks columns {missing}")
            X, level, med = df[BASELINE_FEATURES].astype(float), None, {}
        else:
            level = Level(args.features)
            med = compute_medians(df, level)
            X = design_matrix(df, level, med)
        grid = grid_for(args.model, task, args.grid)
    except (FeatureError, GridError, KeyError) as exc:
        raise CliError(str(exc), EXIT_INPUT)
    print(f"grid {args.model}:{task.value} sweep size {grid.size} x {args.cv} folds")
    try:
        res = search(args.model, task, X, df["y"].to_numpy(dtype=float), grid, args.seed,
                     cv_seed=[args.seed, CV_STREAM], k=args.cv, jobs=_jobs(args.jobs),
                     level=level, medians=med)
    except RuntimeError as exc:
        raise CliError(str(exc), EXIT_TRAIN)
    for i, msg in res.failures.items():
        print(f"candidate {i} failed: {msg}", file=sys.stderr)
    model = res.refit
    model.save(args.out)
    trace = args.out + ".search"
    write_table(trace, ["candidate", "params", f"mean_{res.metric}", f"std_{res.metric}", "error"],
                res.rows())
    print(f"best {res.metric} {res.best_score:.4f} with {res.best_params or '{}'} -> {args.out}")
    write_manifest(args.out + ".manifest.json", "train", args,
                   {"seed": args.seed, "cv_stream": [args.seed, CV_STREAM]},
                   [args.dataset, args.grid], [args.out, trace + ".csv"], t0)


# -- eval ----------------------------------------------------------------------

def _open_model(path) -> TrainedModel:
    if not os.path.isfile(path):
        raise CliError(f"{path}: no such file", EXIT_INPUT)
    try:
        return load_model(path)
    except (ModelFormatError, ValueError, KeyError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_INPUT)


def _check_schema(model, df):
    try:
        return model.select(df)
    except ModelSchemaError as exc:
        raise CliError(f"model and dataset disagree: {exc}", EXIT_EVAL)


def evaluate(model: TrainedModel, df: pd.DataFrame) -> dict:
    """Scores, confusion matrix and per-kind error breakdown on ``df``."""
    X = _check_schema(model, df)
    y = df["y"].to_numpy(dtype=float)
    task = model.task
    yt = labels(y, task)
    out = {"n": len(df), "metrics": [], "confusion": None, "by_kind": []}
    kinds = df["kind"].to_numpy()
    if task.is_classification:
        pred = model.predict_class(X)
        cm = ConfusionMatrix.from_labels(yt, pred, task.n_classes, CLASS_NAMES[task])
        out["confusion"] = cm
        out["metrics"].append(["f1" if task is Task.BINARY else "f1_weighted",
                               f1(cm, "binary" if task is Task.BINARY else "weighted")])
        try:
            out["metrics"].append(["auc", score_model(model, X, y)])
        except ValueError:
            out["metrics"].append(["auc", float("nan")])
        err = np.abs(pred - yt).astype(float)
        label = "mae_class"
    else:
        pred = model.predict(X)
        out["metrics"].append(["mae", mae(pred, yt)])
        err = np.abs(pred - yt)
        label = "mae"
    for k in sorted(set(kinds)):
        sel = kinds == k
        out["by_kind"].append([k, int(sel.sum()), label, float(err[sel].mean())])
    out["by_kind"].append(["all", len(err), label, float(err.mean()) if len(err) else float("nan")])
    return out


def cmd_eval(args):
    t0 = time.time()
    model = _open_model(args.model)
    full = _load_dataset(args.dataset)
    df = _rows(full, args.split)
    if len(df) == 0:
        raise CliError(f"no rows in split {args.split!r}", EXIT_INPUT)
    if model.level is not None and window_size(df) != sum(f.startswith("Agg.H") for f in model.features):
        raise CliError("model and dataset disagree on the echo window size", EXIT_EVAL)
    res = evaluate(model, df)
    rep = args.report
    os.makedirs(rep, exist_ok=True)
    outputs = []
    head = [["model", model.kind], ["task", model.task.value], ["features", model.level or "baseline"],
            ["split", args.split], ["n", res["n"]]]
    write_table(os.path.join(rep, "metrics"), ["field", "value"], head + res["metrics"])
    write_table(os.path.join(rep, "by_kind"), ["kind", "n", "metric", "value"], res["by_kind"])
    outputs += [os.path.join(rep, "metrics.csv"), os.path.join(rep, "by_kind.csv")]
    print(format_table(["field", "value"], head + res["metrics"]), end="")
    print(format_table(["kind", "n", "metric", "value"], res["by_kind"]), end="")
    cm = res["confusion"]
    if cm is not None:
        rows = [[f"obs {c}"] + list(map(int, r)) for c, r in zip(cm.classes, cm.counts)]
        header = [""] + [f"pred {c}" for c in cm.classes]
        write_table(os.path.join(rep, "confusion"), header, rows)
        outputs.append(os.path.join(rep, "confusion.csv"))
        print(format_table(header, rows), end="")
    if args.importance:
        src = _rows(full, args.importance_split)
        X = _check_schema(model, src)
        y = src["y"].to_numpy(dtype=float)
        table = permutation_importance(lambda A, yy: score_model(model, A, yy), X, y,
                                       metric_for(model.task), args.repeats, args.seed,
                                       features=model.features)
        rows = [[i + 1, f, m, s] for i, (f, m, s) in enumerate(table.ranked())]
        write_table(os.path.join(rep, "importance"), ["rank", "feature", "mean_drop", "std_drop"], rows)
        top = rows[:10]
        write_table(os.path.join(rep, "importance_top10"), ["rank", "feature", "mean_drop", "std_drop"], top)
        outputs.append(os.path.join(rep, "importance.csv"))
        print("Top ten most important features")
        print(format_table(["rank", "feature", "mean_drop", "std_drop"], top), end="")
    write_manifest(os.path.join(rep, "manifest.json"), "eval", args, {"seed": args.seed},
                   [args.model, args.dataset], outputs, t0)


# -- predict -------------------------------------------------------------------

def cmd_predict(args):
    t0 = time.time()
    model = _open_model(args.model)
    if not os.path.isfile(args.window):
        raise CliError(f"{args.window}: no such file", EXIT_INPUT)
    df = read_dataset(args.window)
    X = _check_schema(model, df)
    ids = df["event_id"].tolist() if "event_id" in df.columns else list(range(len(df)))
    if model.task.is_classification:
        P = model.predict(X)
        cls = model.predict_class(X)
        names = CLASS_NAMES[model.task]
        header = ["event_id", "class"] + [f"score_{c}" for c in names]
        rows = [[i, names[c]] + list(map(float, p)) for i, c, p in zip(ids, cls, P)]
    else:
        header = ["event_id", "biomass_t"]
        rows = [[i, float(v)] for i, v in zip(ids, model.predict(X))]
    print(format_table(header, rows), end="")
    if args.out:
        write_table(args.out, header, rows)
        write_manifest(args.out + ".manifest.json", "predict", args, {}, [args.model, args.window],
                       [args.out + ".csv"], t0)


# -- entry ---------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="tunai", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"tunai {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic world")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--buoys", type=int, default=100)
    s.add_argument("--days", type=int, default=40)
    s.add_argument("--set-bias", type=float, default=None)
    s.add_argument("--violation-rate", type=float, default=None)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("build", help="clean and window raw files into a dataset")
    for f in ("logbook", "echo", "ocean", "bathy", "out"):
        b.add_argument(f"--{f}", required=True)
    b.add_argument("--window", type=int, choices=WINDOW_HOURS, default=72)
    b.add_argument("--test-frac", type=float, default=0.25)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_build)

    t = sub.add_parser("train", help="grid-search and fit a model")
    t.add_argument("--dataset", required=True)
    t.add_argument("--task", required=True, choices=[x.value for x in Task])
    t.add_argument("--model", required=True, choices=["baseline", "linear", "rf", "gb", "xgb"])
    t.add_argument("--features", default="all", choices=[x.value for x in Level])
    t.add_argument("--grid", default=None, help="grid file (defaults to the shipped grids)")
    t.add_argument("--cv", type=int, default=5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--jobs", type=int, default=0, help="parallel workers, 0 = all cores")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a model on a dataset split")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", default="test", choices=["train", "test", "all"])
    e.add_argument("--report", required=True)
    e.add_argument("--importance", action="store_true")
    e.add_argument("--importance-split", default="train", choices=["train", "test", "all"])
    e.add_argument("--repeats", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("predict", help="score window feature rows with a saved model")
    q.add_argument("--model", required=True)
    q.add_argument("--window", required=True, help="CSV of feature rows in dataset layout")
    q.add_argument("--out", default=None, help="basename for .csv/.txt output")
    q.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # usage errors exit 2
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SchemaError, FeatureError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
