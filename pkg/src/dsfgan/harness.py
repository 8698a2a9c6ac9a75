"""Machine-learning-efficacy harness: base GAN vs. feedback GAN under k-fold CV.

For every fold the two variants are trained on the same rows with the same
seed, each is sampled ``reps`` times, a downstream model is fitted on every
synthetic sample and scored on the held-out real fold. Repetitions are
averaged inside a fold; the fold-level values give the mean and a 95%
t-interval.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd

from .downstream import LinearRegressionGD, LogisticRegressionGD
from .exceptions import ConfigError, FoldError
from .metrics import confidence_interval, precision_recall, rmse_r2
from .synthesizer import DSFGAN
from .tabular import (CATEGORICAL, CLASSIFICATION, TabularEncoder, design_matrix,
                     kfold_split, target_vector)
from .utils import check_positive_int, derive_seed, json_digest, substream

REPORT_FORMAT_VERSION = 1
VARIANTS = ("base", "feedback")
METRICS = {CLASSIFICATION: ("precision", "recall"), "regression": ("rmse", "r2")}
AGGREGATION = (
    "metrics averaged over sampling repetitions within each fold; "
    "mean and 95% Student-t half-width across fold-level values"
)


def eval_model(task):
    if task == CLASSIFICATION:
        return LogisticRegressionGD(max_iter=1000, learning_rate=0.5)
    return LinearRegressionGD(max_iter=1000, learning_rate=0.05)


def efficacy_eval(synthesizer, real_validation, n, schema, seed):
    """Train a downstream model on ``n`` synthetic rows, score it on real rows.

    ``synthesizer`` is anything with ``sample(n, random_state)`` returning a
    DataFrame with the schema's columns.
    """
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    synth = synthesizer.sample(n, random_state=substream(seed, "efficacy"))
    X_syn, y_syn = design_matrix(synth, schema), target_vector(synth, schema)
    X_val, y_val = design_matrix(real_validation, schema), target_vector(real_validation, schema)
    record = {"n_synthetic": int(n), "degenerate": False}
    if schema.task == CLASSIFICATION:
        classes = np.unique(y_syn)
        if len(classes) < 2:
            record["degenerate"] = True
            y_hat = np.full(len(y_val), classes[0])
        else:
            y_hat = eval_model(schema.task).fit(X_syn, y_syn).predict(X_val)
        record["precision"], record["recall"] = precision_recall(y_val, y_hat)
    else:
        y_hat = eval_model(schema.task).fit(X_syn, y_syn).predict(X_val)
        record["rmse"], record["r2"] = rmse_r2(y_val, y_hat)
    return record


def _mean_metrics(records, names):
    out = {}
    for m in names:
        vals = [r[m] for r in records if r[m] is not None]
        out[m] = float(np.mean(vals)) if vals else None
    return out


def run_fold(frame, config, gan_params, fold, train_idx, val_idx, reps, seed):
    """Train both variants on one fold and evaluate them; returns the fold record."""
    if np.intersect1d(train_idx, val_idx).size:
        raise AssertionError(f"fold {fold}: training and validation rows overlap")
    fold_seed = derive_seed(seed, "fold", fold)
    train_df = frame.iloc[train_idx].reset_index(drop=True)
    val_df = frame.iloc[val_idx].reset_index(drop=True)

    categories = {
        name: sorted({str(v) for v in frame[name]})
        for name, kind in config.columns.items() if kind == CATEGORICAL
    }
    encoder = TabularEncoder.from_config(config, categories=categories, random_state=fold_seed).fit(train_df)
    schema = encoder.schema_

    variants, digests = {}, {}
    names = METRICS[config.task]
    for variant in VARIANTS:
        gan = DSFGAN(encoder=encoder, feedback=variant == "feedback", random_state=fold_seed, **gan_params)
        gan.fit(train_df)
        digests[variant] = (gan.data_digest_, gan.init_digest_)
        reps_out = [
            efficacy_eval(gan, val_df, len(train_df), schema, derive_seed(seed, "fold", fold, "sample", r))
            for r in range(reps)
        ]
        variants[variant] = {
            "repetitions": reps_out,
            "mean": _mean_metrics(reps_out, names),
            "param_digest": gan.param_digest(),
            "trace_L_f": [row["L_f"] for row in gan.loss_trace_],
        }
    if digests["base"] != digests["feedback"]:
        raise AssertionError(f"fold {fold}: variants saw different training rows or initial parameters")
    return {
        "fold": fold,
        "n_train": int(len(train_idx)),
        "n_validation": int(len(val_idx)),
        "train_rows_digest": digests["base"][0],
        "init_digest": digests["base"][1],
        "guards": {"leakage": True, "pairing": True},
        "variants": variants,
    }


def _run_fold_safe(args):
    fold = args[3]
    try:
        return run_fold(*args)
    except Exception as exc:  # noqa: BLE001 - wrapped with fold context
        raise FoldError(fold, exc) from exc


def summarize(folds, task):
    summary = {}
    for variant in VARIANTS:
        summary[variant] = {}
        for m in METRICS[task]:
            vals = [f["variants"][variant]["mean"][m] for f in folds]
            vals = [v for v in vals if v is not None]
            if len(vals) >= 2:
                mean, half = confidence_interval(vals)
            else:
                mean, half = (vals[0], 0.0) if vals else (None, None)
            summary[variant][m] = {"mean": mean, "half_width": half, "fold_values": vals}
    deltas = {
        m: (summary["feedback"][m]["mean"] - summary["base"][m]["mean"])
        if summary["feedback"][m]["mean"] is not None and summary["base"][m]["mean"] is not None else None
        for m in METRICS[task]
    }
    return summary, deltas


def run_experiment(frame, config, gan_params=None, k=5, reps=5, seed=0, jobs=1, reference=None):
    """Paired base/feedback efficacy experiment over ``k`` folds of ``frame``.

    ``gan_params`` are passed to ``DSFGAN`` (epochs, batch_size,
    feedback_lambda, ...). Returns the report as a dict.
    """
    gan_params = dict(gan_params or {})
    check_positive_int(k, "k", 2)
    check_positive_int(reps, "reps")
    folds = kfold_split(len(frame), k, seed)
    all_idx = np.arange(len(frame))
    tasks = [
        (frame, config, gan_params, i, np.setdiff1d(all_idx, folds[i]), folds[i], reps, seed)
        for i in range(k)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold_safe, tasks))
    else:
        results = [_run_fold_safe(t) for t in tasks]

    summary, deltas = summarize(results, config.task)
    settings = {"schema_config": config.to_dict(), "gan_params": _jsonable(gan_params),
                "k": k, "reps": reps, "seed": seed}
    report = {
        "format_version": REPORT_FORMAT_VERSION,
        "task": config.task,
        "metrics": list(METRICS[config.task]),
        "settings": settings,
        "config_digest": json_digest(settings),
        "dataset_digest": dataset_digest(frame),
        "aggregation": AGGREGATION,
        "interval": "95% Student-t confidence interval over folds (mean +- half_width)",
        "folds": results,
        "summary": summary,
        "deltas": deltas,
    }
    if reference:
        report["reference"] = reference
    return report


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: list(o) if isinstance(o, tuple) else str(o)))


def dataset_digest(frame):
    return json_digest(pd.DataFrame(frame).astype(str).to_numpy().tolist())


def report_to_json(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _fmt(mean, half):
    if mean is None:
        return "n/a"
    return f"{mean:.4f}±{half:.4f}"


def format_table(report):
    """Plain-text table: one row, mean±half-width per metric and variant."""
    names = report["metrics"]
    labels = {"precision": "Precision", "recall": "Recall", "rmse": "RMSE", "r2": "R^2"}
    s = report["summary"]
    head = ["Variant"] + [labels[m] for m in names]
    rows = [[v] + [_fmt(s[v][m]["mean"], s[v][m]["half_width"]) for m in names] for v in VARIANTS]
    rows.append(["delta (feedback-base)"] + [
        "n/a" if report["deltas"][m] is None else f"{report['deltas'][m]:+.4f}" for m in names
    ])
    ref = report.get("reference")
    if ref:
        for v in VARIANTS:
            rows.append([f"reference {v}"] + [ref.get(v, {}).get(m, "n/a") for m in names])
    widths = [max(len(str(r[i])) for r in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append("")
    lines.append(f"folds={report['settings']['k']} reps={report['settings']['reps']} "
                 f"seed={report['settings']['seed']}; {report['interval']}")
    return "\n".join(lines) + "\n"
