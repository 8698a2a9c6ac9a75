"""Tabular data handling: CSV ingestion, per-column encoders, folds.

Continuous columns use mode-specific normalization: a 1-d Gaussian mixture is
fitted to the column, each value is assigned to a mode (sampled in proportion
to the mode responsibilities) and encoded as ``(alpha, one-hot(mode))`` with
``alpha = (value - mean_k) / (4 * std_k)`` clipped to [-1, 1]. Categorical
columns are one-hot encoded over a closed, ordered category list.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError, DataError
from .utils import check_2d, check_random_state, substream

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
CLASSIFICATION = "classification"
REGRESSION = "regression"

MISSING_TOKENS = frozenset({"", "?", "na", "nan", "null", "none"})
PRUNE_WEIGHT = 1e-3
SCHEMA_FORMAT_VERSION = 1


# --- configuration ------------------------------------------------------------

@dataclass
class SchemaConfig:
    """Which columns to use, how to treat them, and what the label is."""

    columns: dict
    target: str
    task: str
    positive_class: str | None = None

    def __post_init__(self):
        if not isinstance(self.columns, dict) or not self.columns:
            raise ConfigError("schema config needs a non-empty 'columns' mapping")
        for name, kind in self.columns.items():
            if kind not in (CONTINUOUS, CATEGORICAL):
                raise ConfigError(f"column {name!r}: kind must be 'continuous' or 'categorical', got {kind!r}")
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ConfigError(f"task must be 'classification' or 'regression', got {self.task!r}")
        if self.target not in self.columns:
            raise ConfigError(f"target column {self.target!r} is not listed in 'columns'")
        expected = CATEGORICAL if self.task == CLASSIFICATION else CONTINUOUS
        if self.columns[self.target] != expected:
            raise ConfigError(f"a {self.task} target must be {expected}, got {self.columns[self.target]!r}")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                columns=dict(d["columns"]),
                target=d["target"],
                task=d["task"],
                positive_class=d.get("positive_class"),
            )
        except KeyError as exc:
            raise ConfigError(f"schema config is missing key {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ConfigError(f"malformed schema config: {exc}") from None

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"schema config not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"schema config {path} is not valid JSON: {exc}") from None

    def to_dict(self):
        return {
            "columns": dict(self.columns),
            "target": self.target,
            "task": self.task,
            "positive_class": self.positive_class,
        }


@dataclass
class LoadedTable:
    frame: pd.DataFrame
    n_dropped: int


def load_csv(path, config):
    """Read the configured columns of a CSV, dropping unusable rows.

    Continuous cells must parse as finite floats; categorical cells must be
    non-empty and not a missing-value token such as ``?``. Rows failing
    either rule are dropped and counted.
    """
    if not os.path.exists(path):
        raise DataError(f"CSV file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: no header row") from None
    raw.columns = [c.strip() for c in raw.columns]
    missing = [c for c in config.columns if c not in raw.columns]
    if missing:
        raise ConfigError(f"column(s) not found in {path}: {', '.join(missing)}")

    keep = np.ones(len(raw), dtype=bool)
    out = {}
    for name, kind in config.columns.items():
        cells = raw[name].str.strip()
        if kind == CONTINUOUS:
            values = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=np.float64)
            keep &= np.isfinite(values)
            out[name] = values
        else:
            keep &= ~cells.str.lower().isin(MISSING_TOKENS).to_numpy()
            out[name] = cells.to_numpy(dtype=object)
    frame = pd.DataFrame({k: v[keep] for k, v in out.items()})
    if len(frame) == 0:
        raise DataError(f"{path}: zero rows left after dropping missing/unparseable values")
    return LoadedTable(frame.reset_index(drop=True), int((~keep).sum()))


# --- Gaussian mixture ------------------------------------------------------------

@dataclass
class Mixture:
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    @property
    def n_modes(self):
        return len(self.means)

    def log_responsibilities(self, x):
        x = np.asarray(x, dtype=np.float64)[:, None]
        logp = (
            np.log(self.weights)
            - np.log(self.stds)
            - 0.5 * np.log(2 * np.pi)
            - 0.5 * ((x - self.means) / self.stds) ** 2
        )
        return logp - logsumexp(logp, axis=1, keepdims=True)

    def to_dict(self):
        return {"means": self.means.tolist(), "stds": self.stds.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["means"], float), np.array(d["stds"], float), np.array(d["weights"], float))


def variance_floor(values):
    values = np.asarray(values, dtype=np.float64)
    span = float(values.max() - values.min()) if values.size else 0.0
    return 1e-6 * span**2 if span > 0 else 1e-6


def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            break
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centers)


def _em(x, k, floor, rng, max_iter, tol):
    n = len(x)
    means = _kmeanspp(x, k, rng)
    k = len(means)
    nearest = np.argmin(np.abs(x[:, None] - means[None, :]), axis=1)
    weights = np.array([max((nearest == j).sum(), 1) for j in range(k)], dtype=np.float64) / n
    weights /= weights.sum()
    var = np.array([max(x[nearest == j].var() if (nearest == j).any() else 0.0, floor) for j in range(k)])

    prev = -np.inf
    ll = prev
    for _ in range(max_iter):
        logp = np.log(weights) - 0.5 * np.log(2 * np.pi * var) - 0.5 * (x[:, None] - means) ** 2 / var
        norm = logsumexp(logp, axis=1, keepdims=True)
        ll = float(norm.mean())
        resp = np.exp(logp - norm)
        nk = resp.sum(axis=0) + 1e-300
        weights = nk / n
        means = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (x[:, None] - means) ** 2).sum(axis=0) / nk, floor)
        if abs(ll - prev) < tol:
            break
        prev = ll
    return means, var, weights, ll


def fit_gmm(values, max_modes=10, random_state=None, max_iter=100, tol=1e-6):
    """Fit a 1-d Gaussian mixture by EM and return the pruned ``Mixture``.

    Mixtures with 1..max_modes components are fitted (k-means++ start) and
    the one with the lowest BIC is kept. Modes whose weight falls below 1e-3
    are dropped and the remaining weights renormalized. Variances never go
    below ``variance_floor(values)``; a constant column yields a single mode
    at that value with the floor variance.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise DataError("cannot fit a mixture to an empty column")
    if max_modes < 1:
        raise ConfigError("max_modes must be >= 1")
    rng = check_random_state(random_state)
    floor = variance_floor(x)
    n_distinct = len(np.unique(x))
    if n_distinct == 1:
        return Mixture(np.array([x[0]]), np.array([np.sqrt(floor)]), np.array([1.0]))

    best, best_bic, worse = None, np.inf, 0
    for k in range(1, min(max_modes, n_distinct) + 1):
        means, var, weights, ll = _em(x, k, floor, rng, max_iter, tol)
        bic = -2.0 * x.size * ll + (3 * len(means) - 1) * np.log(x.size)
        if bic < best_bic:
            best, best_bic, worse = (means, var, weights), bic, 0
        else:
            worse += 1
            if worse >= 2:
                break

    means, var, weights = best
    keep = weights >= PRUNE_WEIGHT
    if not keep.any():
        keep = weights == weights.max()
    means, var, weights = means[keep], var[keep], weights[keep]
    order = np.argsort(means, kind="stable")
    weights = weights[order] / weights.sum()
    return Mixture(means[order], np.sqrt(var[order]), weights)


# --- schema -----------------------------------------------------------------------

@dataclass
class ColumnMeta:
    """Fitted description of one column."""

    name: str
    kind: str
    is_target: bool = False
    categories: list | None = None
    mixture: Mixture | None = None
    mean: float = 0.0
    std: float = 1.0
    minimum: float = 0.0
    maximum: float = 1.0

    @property
    def width(self):
        if self.kind == CATEGORICAL:
            return len(self.categories)
        return 1 + self.mixture.n_modes

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "is_target": self.is_target}
        if self.kind == CATEGORICAL:
            d["categories"] = list(self.categories)
        else:
            d["mixture"] = self.mixture.to_dict()
            d.update(mean=self.mean, std=self.std, minimum=self.minimum, maximum=self.maximum)
        return d

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == CATEGORICAL:
            return cls(d["name"], d["kind"], d["is_target"], categories=list(d["categories"]))
        return cls(
            d["name"], d["kind"], d["is_target"],
            mixture=Mixture.from_dict(d["mixture"]),
            mean=d["mean"], std=d["std"], minimum=d["minimum"], maximum=d["maximum"],
        )


@dataclass
class TableSchema:
    """Ordered columns plus the encoded layout (offset, width) of each."""

    columns: list
    task: str
    positive_class: str | None = None
    category_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        targets = [c for c in self.columns if c.is_target]
        if len(targets) != 1:
            raise ConfigError(f"schema needs exactly one target column, found {len(targets)}")
        self.offsets = []
        pos = 0
        for col in self.columns:
            self.offsets.append(pos)
            pos += col.width
        self.width = pos

    @property
    def target(self):
        return next(c for c in self.columns if c.is_target)

    @property
    def names(self):
        return [c.name for c in self.columns]

    def span(self, name):
        i = self.names.index(name)
        return self.offsets[i], self.offsets[i] + self.columns[i].width

    @property
    def target_span(self):
        return self.span(self.target.name)

    @property
    def feature_index(self):
        """Encoded positions of every non-target column."""
        lo, hi = self.target_span
        return np.array([i for i in range(self.width) if not lo <= i < hi], dtype=np.int64)

    @property
    def positive_index(self):
        """Index of the positive class inside the target's category list."""
        if self.task != CLASSIFICATION:
            raise ConfigError("positive class only exists for classification")
        cats = self.target.categories
        return cats.index(self.positive_class) if self.positive_class is not None else len(cats) - 1

    @property
    def categorical_spans(self):
        """(column index, start, end) for each categorical column in layout order."""
        out = []
        for i, col in enumerate(self.columns):
            if col.kind == CATEGORICAL:
                out.append((i, self.offsets[i], self.offsets[i] + col.width))
        return out

    def output_segments(self):
        """Activation plan for generator output: ('tanh'|'softmax', start, end)."""
        segs = []
        for col, off in zip(self.columns, self.offsets):
            if col.kind == CONTINUOUS:
                segs.append(("tanh", off, off + 1))
                segs.append(("softmax", off + 1, off + col.width))
            else:
                segs.append(("softmax", off, off + col.width))
        return segs

    def scale_target(self, values):
        """Min-max scale a regression target into [0, 1] using fitted bounds."""
        t = self.target
        span = t.maximum - t.minimum
        return (np.asarray(values, dtype=np.float64) - t.minimum) / (span if span > 0 else 1.0)

    def to_dict(self):
        return {
            "format_version": SCHEMA_FORMAT_VERSION,
            "task": self.task,
            "positive_class": self.positive_class,
            "columns": [c.to_dict() for c in self.columns],
            "category_counts": {k: list(map(int, v)) for k, v in self.category_counts.items()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != SCHEMA_FORMAT_VERSION:
            raise ConfigError(f"unsupported schema format_version {d.get('format_version')!r}")
        return cls(
            columns=[ColumnMeta.from_dict(c) for c in d["columns"]],
            task=d["task"],
            positive_class=d.get("positive_class"),
            category_counts={k: np.array(v, dtype=np.int64) for k, v in d.get("category_counts", {}).items()},
        )


def fit_schema(frame, config, max_modes=10, random_state=None, categories=None):
    """Fit per-column encoders on ``frame`` according to ``config``.

    ``categories`` optionally fixes the category list of some columns (so a
    schema fitted on one fold still accepts every category of the dataset).
    """
    rng = check_random_state(random_state)
    categories = categories or {}
    cols, counts = [], {}
    for name, kind in config.columns.items():
        if name not in frame.columns:
            raise ConfigError(f"column {name!r} missing from data")
        is_target = name == config.target
        values = frame[name].to_numpy()
        if kind == CATEGORICAL:
            cats = list(categories.get(name) or sorted({str(v) for v in values}))
            if is_target:
                if len(cats) != 2:
                    raise ConfigError(f"classification target {name!r} must be binary, found {len(cats)} classes")
                if config.positive_class is not None:
                    if config.positive_class not in cats:
                        raise ConfigError(f"positive class {config.positive_class!r} not among {cats}")
                    cats = [c for c in cats if c != config.positive_class] + [config.positive_class]
            lookup = {c: j for j, c in enumerate(cats)}
            idx = np.array([lookup.get(str(v), -1) for v in values])
            if (idx < 0).any():
                raise DataError(f"column {name!r} has values outside its category list")
            counts[name] = np.bincount(idx, minlength=len(cats)).astype(np.int64)
            cols.append(ColumnMeta(name, kind, is_target, categories=cats))
        else:
            x = values.astype(np.float64)
            mix = fit_gmm(x, max_modes=max_modes, random_state=rng)
            std = float(x.std())
            cols.append(ColumnMeta(
                name, kind, is_target, mixture=mix, mean=float(x.mean()),
                std=std if std > 0 else 1.0, minimum=float(x.min()), maximum=float(x.max()),
            ))
    return TableSchema(cols, config.task, config.positive_class, counts)


# --- encode / decode ----------------------------------------------------------

def encode_table(frame, schema, rng):
    """Encode every row of ``frame`` into an (n, schema.width) float matrix."""
    rng = check_random_state(rng)
    n = len(frame)
    out = np.zeros((n, schema.width))
    for col, off in zip(schema.columns, schema.offsets):
        values = frame[col.name].to_numpy()
        if col.kind == CATEGORICAL:
            lookup = {c: j for j, c in enumerate(col.categories)}
            idx = np.array([lookup.get(str(v), -1) for v in values], dtype=np.int64)
            if (idx < 0).any():
                bad = values[np.argmax(idx < 0)]
                raise DataError(f"unseen category {bad!r} in column {col.name!r}")
            out[np.arange(n), off + idx] = 1.0
        else:
            x = values.astype(np.float64)
            mix = col.mixture
            resp = np.exp(mix.log_responsibilities(x))
            cdf = np.cumsum(resp, axis=1)
            u = rng.uniform(size=(n, 1)) * cdf[:, -1:]
            mode = np.minimum((u > cdf).sum(axis=1), mix.n_modes - 1)
            alpha = (x - mix.means[mode]) / (4.0 * mix.stds[mode])
            out[:, off] = np.clip(alpha, -1.0, 1.0)
            out[np.arange(n), off + 1 + mode] = 1.0
    return out


def decode_table(encoded, schema):
    """Map encoded (possibly soft) rows back to a DataFrame of raw values."""
    Z = check_2d(encoded, "encoded", schema.width)
    data = {}
    for col, off in zip(schema.columns, schema.offsets):
        seg = Z[:, off:off + col.width]
        if col.kind == CATEGORICAL:
            data[col.name] = np.array(col.categories, dtype=object)[seg.argmax(axis=1)]
        else:
            mode = seg[:, 1:].argmax(axis=1)
            data[col.name] = seg[:, 0] * 4.0 * col.mixture.stds[mode] + col.mixture.means[mode]
    return pd.DataFrame(data, columns=schema.names)


def encode_row(row, schema, rng=None):
    """Encode a single row given as a mapping column name -> value."""
    frame = pd.DataFrame({name: [row[name]] for name in schema.names})
    return encode_table(frame, schema, rng)[0]


def decode_row(encoded, schema):
    return decode_table(np.asarray(encoded, dtype=np.float64)[None, :], schema).iloc[0].to_dict()


def design_matrix(frame, schema):
    """Downstream features from raw rows: z-scored continuous + one-hot categorical, target excluded."""
    parts = []
    for col in schema.columns:
        if col.is_target:
            continue
        values = frame[col.name].to_numpy()
        if col.kind == CATEGORICAL:
            lookup = {c: j for j, c in enumerate(col.categories)}
            idx = np.array([lookup.get(str(v), -1) for v in values])
            onehot = np.zeros((len(values), len(col.categories)))
            ok = idx >= 0
            onehot[np.nonzero(ok)[0], idx[ok]] = 1.0
            parts.append(onehot)
        else:
            parts.append(((values.astype(np.float64) - col.mean) / col.std)[:, None])
    if not parts:
        return np.zeros((len(frame), 0))
    return np.hstack(parts)


def target_vector(frame, schema):
    """Downstream labels: 0/1 for classification, min-max scaled value for regression."""
    t = schema.target
    values = frame[t.name].to_numpy()
    if schema.task == CLASSIFICATION:
        positive = t.categories[schema.positive_index]
        return np.array([str(v) == positive for v in values], dtype=np.float64)
    return schema.scale_target(values.astype(np.float64))


class TabularEncoder(TransformerMixin, BaseEstimator):
    """Fit/transform wrapper around ``fit_schema``/``encode_table``/``decode_table``.

    Parameters
    ----------
    columns : dict
        Column name -> ``"continuous"`` or ``"categorical"``.
    target : str
        Label column.
    task : {"classification", "regression"}
    positive_class : str, optional
        Positive label for classification; defaults to the last sorted class.
    max_modes : int
        Upper bound on mixture modes per continuous column.
    categories : dict, optional
        Fixed category lists for some columns.
    random_state : int or None
        Seeds mixture fitting and mode sampling during ``transform``.
    """

    def __init__(self, columns=None, target=None, task=CLASSIFICATION, positive_class=None,
                 max_modes=10, categories=None, random_state=None):
        self.columns = columns
        self.target = target
        self.task = task
        self.positive_class = positive_class
        self.max_modes = max_modes
        self.categories = categories
        self.random_state = random_state

    @classmethod
    def from_config(cls, config, **kwargs):
        return cls(columns=dict(config.columns), target=config.target, task=config.task,
                   positive_class=config.positive_class, **kwargs)

    @classmethod
    def from_schema(cls, schema, random_state=None):
        """Wrap an already fitted schema (e.g. loaded from disk)."""
        enc = cls(
            columns={c.name: c.kind for c in schema.columns}, target=schema.target.name,
            task=schema.task, positive_class=schema.positive_class, random_state=random_state,
        )
        enc.schema_ = schema
        return enc

    def _config(self):
        return SchemaConfig(dict(self.columns or {}), self.target, self.task, self.positive_class)

    def fit(self, X, y=None):
        seed = 0 if self.random_state is None else self.random_state
        self.schema_ = fit_schema(X, self._config(), self.max_modes, substream(seed, "gmm"), self.categories)
        return self

    def transform(self, X, random_state=None):
        check_is_fitted(self, "schema_")
        if random_state is None:
            random_state = substream(0 if self.random_state is None else self.random_state, "encode")
        return encode_table(X, self.schema_, random_state)

    def inverse_transform(self, X):
        check_is_fitted(self, "schema_")
        return decode_table(X, self.schema_)


# --- folds ------------------------------------------------------------------------

def kfold_split(row_count, k, seed):
    """Shuffle ``range(row_count)`` with ``seed`` and cut it into ``k`` folds.

    Fold sizes differ by at most one.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if row_count < k:
        raise DataError(f"cannot split {row_count} rows into {k} folds")
    perm = substream(seed, "kfold").permutation(row_count)
    return [np.sort(f) for f in np.array_split(perm, k)]
