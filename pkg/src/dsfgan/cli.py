"""Command-line interface: ``dsfgan {prepare,train,sample,experiment}``.

Settings are resolved as built-in defaults < dataset preset < JSON config
file < command-line flags. Exit codes: 0 ok, 2 config error, 3 data error,
4 numeric abort, 5 experiment fold failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from .exceptions import ConfigError, DataError, FoldError, NonFiniteError
from .gan import TRACE_COLUMNS
from .harness import format_table, report_to_json, run_experiment
from .synthesizer import DSFGAN
from .tabular import CATEGORICAL, SchemaConfig, TableSchema, TabularEncoder, load_csv
from .utils import check_non_negative, check_positive_int

log = logging.getLogger("dsfgan")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_FOLD = 0, 2, 3, 4, 5

DEFAULTS = {
    "epochs": 300,
    "batch_size": 500,
    "lambda": 1.0,
    "folds": 5,
    "reps": 5,
    "seed": 0,
    "variant": "feedback",
    "jobs": 1,
    "out": "out",
}

PRESETS = {
    "adult": {
        "epochs": 100, "batch_size": 500, "lambda": 1.0,
        "reference": {
            "base": {"precision": "0.575±0.003", "recall": "0.441±0.007"},
            "feedback": {"precision": "0.598±0.003", "recall": "0.485±0.006"},
        },
    },
    "house": {
        "epochs": 500, "batch_size": 200, "lambda": 1.0,
        "reference": {
            "base": {"rmse": "0.0118±1.7e-4", "r2": "0.3607±0.018"},
            "feedback": {"rmse": "0.0115±5.8e-5", "r2": "0.3903±0.006"},
        },
    },
}

# keys of RunConfig that may appear in a config file
CONFIG_KEYS = set(DEFAULTS) | {"dataset", "schema_config", "preset", "gan"}


def resolve_config(args):
    """Merge defaults, preset, config file and flags into one dict."""
    file_cfg = {}
    base_dir = os.getcwd()
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        base_dir = os.path.dirname(os.path.abspath(args.config))

    preset_name = getattr(args, "preset", None) or file_cfg.get("preset")
    cfg = dict(DEFAULTS)
    if preset_name:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
        cfg.update({k: v for k, v in PRESETS[preset_name].items() if k != "reference"})
        cfg["preset"] = preset_name
    cfg.update(file_cfg)
    for path_key in ("dataset", "schema_config"):
        if cfg.get(path_key) and not os.path.isabs(cfg[path_key]):
            cfg[path_key] = os.path.normpath(os.path.join(base_dir, cfg[path_key]))

    flags = {
        "dataset": getattr(args, "data", None), "schema_config": getattr(args, "schema", None),
        "seed": args.seed, "out": args.out, "variant": getattr(args, "variant", None),
        "jobs": getattr(args, "jobs", None), "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch", None), "lambda": getattr(args, "lam", None),
        "folds": getattr(args, "folds", None), "reps": getattr(args, "reps", None),
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    cfg.setdefault("gan", {})
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    check_positive_int(cfg["epochs"], "epochs", 2)
    check_positive_int(cfg["batch_size"], "batch", 2)
    check_positive_int(cfg["folds"], "folds", 2)
    check_positive_int(cfg["reps"], "reps")
    check_positive_int(cfg["jobs"], "jobs")
    check_non_negative(cfg["lambda"], "lambda")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    if cfg["variant"] not in ("base", "feedback", "paired"):
        raise ConfigError(f"variant must be base, feedback or paired, got {cfg['variant']!r}")
    if not isinstance(cfg["gan"], dict):
        raise ConfigError("'gan' must be an object of extra DSFGAN parameters")


def _require(cfg, key):
    value = cfg.get(key)
    if not value:
        raise ConfigError(f"missing required setting {key!r}")
    if key in ("dataset", "schema_config") and not os.path.exists(value):
        raise (DataError if key == "dataset" else ConfigError)(f"{key} not found: {value}")
    return value


def _gan_params(cfg):
    params = {"epochs": cfg["epochs"], "batch_size": cfg["batch_size"], "feedback_lambda": float(cfg["lambda"])}
    params.update(cfg["gan"])
    return params


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _prepared_schema_path(cfg):
    return os.path.join(cfg["out"], "schema.json")


# --- commands -----------------------------------------------------------------

def cmd_prepare(cfg):
    schema_cfg = SchemaConfig.from_json(_require(cfg, "schema_config"))
    table = load_csv(_require(cfg, "dataset"), schema_cfg)
    encoder = TabularEncoder.from_config(schema_cfg, random_state=cfg["seed"]).fit(table.frame)
    schema = encoder.schema_
    os.makedirs(cfg["out"], exist_ok=True)
    doc = schema.to_dict()
    doc["provenance"] = {"effective_config": cfg, "n_rows": len(table.frame), "n_dropped": table.n_dropped}
    path = _prepared_schema_path(cfg)
    _write_json(path, doc)

    print(f"rows: {len(table.frame)}  dropped: {table.n_dropped}")
    for col in schema.columns:
        if col.kind == CATEGORICAL:
            detail = f"{len(col.categories)} categories"
        else:
            detail = f"{col.mixture.n_modes} modes, range [{col.minimum:g}, {col.maximum:g}]"
        print(f"  {col.name:<24} {col.kind:<12} {detail}{'  [target]' if col.is_target else ''}")
    print(f"schema written to {path}")
    return EXIT_OK


def _load_prepared(cfg):
    path = _prepared_schema_path(cfg)
    if not os.path.exists(path):
        raise ConfigError(f"no prepared schema at {path}; run 'prepare' first")
    try:
        with open(path, encoding="utf-8") as fh:
            return TableSchema.from_dict(json.load(fh))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed schema file {path}: {exc}") from None


def cmd_train(cfg):
    schema = _load_prepared(cfg)
    schema_cfg = SchemaConfig(
        {c.name: c.kind for c in schema.columns}, schema.target.name, schema.task, schema.positive_class
    )
    table = load_csv(_require(cfg, "dataset"), schema_cfg)
    variant = cfg["variant"]
    if variant == "paired":
        raise ConfigError("train takes variant base or feedback; use 'experiment' for paired runs")
    encoder = TabularEncoder.from_schema(schema, cfg["seed"])
    gan = DSFGAN(encoder=encoder, feedback=variant == "feedback", random_state=cfg["seed"], **_gan_params(cfg))
    gan.fit(table.frame)

    model_path = os.path.join(cfg["out"], f"model_{variant}.json")
    trace_path = os.path.join(cfg["out"], f"loss_trace_{variant}.csv")
    gan.save(model_path, extra={"effective_config": cfg, "variant": variant})
    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        writer.writerows(gan.loss_trace_)
    print(f"model written to {model_path}")
    print(f"loss trace written to {trace_path}")
    return EXIT_OK


def cmd_sample(args):
    n = args.n
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    gan = DSFGAN.load(args.model)
    frame = gan.sample(n, random_state=args.seed)
    if args.out in (None, "-"):
        frame.to_csv(sys.stdout, index=False, lineterminator="\n")
    else:
        frame.to_csv(args.out, index=False, lineterminator="\n")
        print(f"{n} rows written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_experiment(cfg):
    schema_cfg = SchemaConfig.from_json(_require(cfg, "schema_config"))
    table = load_csv(_require(cfg, "dataset"), schema_cfg)
    reference = PRESETS.get(cfg.get("preset"), {}).get("reference")
    report = run_experiment(
        table.frame, schema_cfg, _gan_params(cfg), k=cfg["folds"], reps=cfg["reps"],
        seed=cfg["seed"], jobs=cfg["jobs"], reference=reference,
    )
    report["effective_config"] = {k: v for k, v in cfg.items() if k != "jobs"}
    os.makedirs(cfg["out"], exist_ok=True)
    json_path = os.path.join(cfg["out"], "report.json")
    text_path = os.path.join(cfg["out"], "report.txt")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))
    table_text = format_table(report)
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(table_text)
    print(table_text, end="")
    print(f"report written to {json_path} and {text_path}")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="dsfgan", description="Tabular GAN with downstream-task feedback.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--preset", choices=sorted(PRESETS), help="dataset defaults (epochs, batch, lambda)")
        p.add_argument("--data", help="input CSV (overrides 'dataset')")
        p.add_argument("--schema", help="schema config JSON (overrides 'schema_config')")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    def training(p):
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lambda", dest="lam", type=float)

    p = sub.add_parser("prepare", help="fit column encoders and write the schema")
    common(p)

    p = sub.add_parser("train", help="train one variant on a prepared dataset")
    common(p)
    training(p)
    p.add_argument("--variant", choices=["base", "feedback"])

    p = sub.add_parser("sample", help="write decoded synthetic rows from a model file")
    p.add_argument("model", help="model JSON written by 'train'")
    p.add_argument("-n", "--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("experiment", help="paired base vs. feedback efficacy experiment")
    common(p)
    training(p)
    p.add_argument("--variant", choices=["paired"])
    p.add_argument("--folds", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--jobs", type=int, help="folds to run concurrently")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "sample":
            return cmd_sample(args)
        cfg = resolve_config(args)
        if args.command == "experiment":
            cfg["variant"] = "paired"
        return {"prepare": cmd_prepare, "train": cmd_train, "experiment": cmd_experiment}[args.command](cfg)
    except FoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FOLD
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
