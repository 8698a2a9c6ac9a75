"""Downstream-task feedback for the generator.

After the warmup epochs, every generator step fits a logistic (or linear)
regression on a detached synthetic sample, then scores the generator's live
batch with that frozen model. The resulting log-loss (or RMSE), scaled by
``lam``, is added to the generator loss; gradients reach the generator
through both the features and the generated labels of the live batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .downstream import LinearRegressionGD, LogisticRegressionGD
from .tabular import CLASSIFICATION, REGRESSION
from .utils import check_non_negative, check_positive, check_positive_int

PROB_CLAMP = 1e-7


@dataclass
class FeedbackConfig:
    lam: float = 1.0
    fit_steps: int = 200
    fit_samples: int | None = None  # None: the GAN batch size
    lr_classification: float = 0.1
    lr_regression: float = 0.05

    def __post_init__(self):
        check_non_negative(self.lam, "lambda")
        check_positive_int(self.fit_steps, "fit_steps")
        if self.fit_samples is not None:
            check_positive_int(self.fit_samples, "fit_samples", 2)
        check_positive(self.lr_classification, "lr_classification")
        check_positive(self.lr_regression, "lr_regression")


def warmup_epochs(n_epochs):
    return n_epochs // 2


def feedback_active(epoch, n_epochs):
    """True once ``epoch`` (1-based) is past the floor(N/2) warmup epochs."""
    if not 1 <= epoch <= n_epochs:
        raise ValueError(f"epoch {epoch} outside 1..{n_epochs}")
    return epoch > warmup_epochs(n_epochs)


# --- features and labels from encoded rows ----------------------------------------

def split_encoded(batch, schema):
    """Hard (features, labels) from a detached encoded batch."""
    batch = np.asarray(batch, dtype=np.float64)
    X = batch[:, schema.feature_index]
    lo, hi = schema.target_span
    seg = batch[:, lo:hi]
    if schema.task == CLASSIFICATION:
        y = (seg.argmax(axis=1) == schema.positive_index).astype(np.float64)
    else:
        mix = schema.target.mixture
        mode = seg[:, 1:].argmax(axis=1)
        y = schema.scale_target(seg[:, 0] * 4.0 * mix.stds[mode] + mix.means[mode])
    return X, y


def _live_labels(live, schema):
    """Differentiable labels from a live batch.

    Classification: the generated probability of the positive class.
    Regression: ``alpha * 4 * sum_k p_k std_k + sum_k p_k mean_k``, min-max
    scaled, where ``p`` is the generated (soft) mode indicator.
    """
    lo, hi = schema.target_span
    if schema.task == CLASSIFICATION:
        k = lo + schema.positive_index
        return live[:, k:k + 1]
    t = schema.target
    mix = t.mixture
    span = t.maximum - t.minimum
    span = span if span > 0 else 1.0
    modes = live[:, lo + 1:hi]
    scale = ad.matmul(modes, ad.Tensor(4.0 * mix.stds[:, None]))
    center = ad.matmul(modes, ad.Tensor(mix.means[:, None]))
    value = ad.add(ad.mul(live[:, lo:lo + 1], scale), center)
    return ad.mul(ad.sub(value, t.minimum), 1.0 / span)


# --- downstream fitting and loss --------------------------------------------------

def make_downstream(task, config):
    if task == CLASSIFICATION:
        return LogisticRegressionGD(max_iter=config.fit_steps, learning_rate=config.lr_classification)
    if task == REGRESSION:
        return LinearRegressionGD(max_iter=config.fit_steps, learning_rate=config.lr_regression)
    raise ValueError(f"unknown task {task!r}")


def fit_downstream(synth_batch, schema, task, config):
    """Fit the downstream model on a detached synthetic batch.

    Returns None when a classification batch holds a single class (the
    caller then keeps its previous model).
    """
    if isinstance(synth_batch, ad.Tensor):
        synth_batch = synth_batch.data
    X, y = split_encoded(synth_batch, schema)
    if task == CLASSIFICATION and len(np.unique(y)) < 2:
        return None
    return make_downstream(task, config).fit(X, y)


def log_loss(y, p):
    """Mean binary cross-entropy; ``p`` is clamped to [1e-7, 1 - 1e-7]."""
    y, p = ad.as_tensor(y), ad.clamp(ad.as_tensor(p), PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = ad.mul(y, ad.log(p))
    negative = ad.mul(ad.sub(1.0, y), ad.log(ad.sub(1.0, p)))
    return ad.neg(ad.mean(ad.add(pos, negative)))


def rmse(y, pred):
    diff = ad.sub(ad.as_tensor(pred), ad.as_tensor(y))
    return ad.sqrt(ad.mean(ad.mul(diff, diff)))


def _frozen(value):
    """Constant copy of a downstream parameter; no gradient can reach it."""
    return ad.detach(value) if isinstance(value, ad.Tensor) else ad.Tensor(np.asarray(value, dtype=np.float64))


def feedback_loss(model, live, schema, task):
    """L_f of the frozen downstream ``model`` on the live synthetic batch."""
    live = ad.as_tensor(live)
    features = live[:, schema.feature_index]
    w = ad.Tensor(_frozen(model.coef_).data.reshape(-1, 1))
    z = ad.add(ad.matmul(features, w), _frozen(model.intercept_))
    labels = _live_labels(live, schema)
    if task == CLASSIFICATION:
        return log_loss(labels, ad.sigmoid(z))
    return rmse(labels, z)


def feedback_term(L_f, lam):
    """lam * L_f."""
    check_non_negative(lam, "lambda")
    return ad.mul(L_f, float(lam))


class FeedbackHook:
    """Training-loop hook producing ``(lam * L_f, L_f)`` after the warmup.

    ``sample_fn(n, rng)`` must return a detached encoded synthetic batch;
    ``rng`` is a stream private to the hook, so the GAN's own random draws
    are unaffected by the feedback.
    """

    def __init__(self, schema, config, n_epochs, batch_size, sample_fn, rng):
        self.schema = schema
        self.config = config
        self.n_epochs = n_epochs
        self.n_samples = config.fit_samples or batch_size
        self.sample_fn = sample_fn
        self.rng = rng
        self.model = None
        self.n_fits = 0
        self.n_skips = 0

    def __call__(self, epoch, live):
        if not feedback_active(epoch, self.n_epochs):
            return None
        fitted = fit_downstream(self.sample_fn(self.n_samples, self.rng), self.schema,
                                self.schema.task, self.config)
        if fitted is None:
            self.n_skips += 1
        else:
            self.model = fitted
            self.n_fits += 1
        if self.model is None:
            return None
        L_f = feedback_loss(self.model, live, self.schema, self.schema.task)
        return feedback_term(L_f, self.config.lam), L_f.item()
