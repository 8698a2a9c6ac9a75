"""Conditional tabular GAN: generator, Wasserstein critic, training loop.

The generator maps ``[z | cond]`` to an encoded row; continuous scalars go
through tanh and every one-hot segment through Gumbel-softmax. The critic
scores ``[row | cond]``. Critic weights are clipped to [-c, c] after every
critic update. The generator loss is ``-mean(critic(fake)) + H`` where ``H``
is the cross-entropy between the conditioned category and the generator's
softmax for that column; a feedback hook may add one more term per step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, NonFiniteError
from .tabular import TableSchema
from .utils import array_digest, check_non_negative, check_positive, check_positive_int

MODEL_FORMAT_VERSION = 1
H_FLOOR = 1e-12
TRACE_COLUMNS = ("epoch", "critic_loss", "gen_loss", "H", "L_f")


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 500
    generator_lr: float = 2e-4
    critic_lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    critic_steps: int = 1
    clip_value: float = 0.01
    noise_dim: int = 128
    generator_dims: tuple = (256, 256)
    critic_dims: tuple = (256, 256)
    tau: float = 0.2
    leaky_slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.epochs, "epochs", 2)
        check_positive_int(self.batch_size, "batch_size", 2)
        check_positive_int(self.critic_steps, "critic_steps")
        check_positive_int(self.noise_dim, "noise_dim")
        check_positive(self.clip_value, "clip_value")
        check_positive(self.generator_lr, "generator_lr")
        check_positive(self.critic_lr, "critic_lr")
        check_positive(self.tau, "tau")
        check_non_negative(self.leaky_slope, "leaky_slope")
        self.generator_dims = tuple(int(d) for d in self.generator_dims)
        self.critic_dims = tuple(int(d) for d in self.critic_dims)


# --- conditional vectors -------------------------------------------------------

@dataclass
class CondVector:
    vector: np.ndarray
    column: int
    category: int


class ConditionSampler:
    """Draws condition vectors over the categorical one-hot segments.

    ``counts`` holds per-column category frequencies in the training data.
    During training a column is picked uniformly and a category with
    probability proportional to ``log(1 + count)``; for post-training
    sampling the raw frequencies are used instead.
    """

    def __init__(self, schema, counts):
        self.spans = []
        off = 0
        for _, lo, hi in schema.categorical_spans:
            self.spans.append((off, lo, hi))
            off += hi - lo
        self.width = off
        self.counts = [np.asarray(c, dtype=np.float64) for c in counts]
        if len(self.counts) != len(self.spans):
            raise ConfigError("category counts do not match the categorical columns")
        self._log_p = [self._normalize(np.log1p(c)) for c in self.counts]
        self._freq_p = [self._normalize(c) for c in self.counts]
        self._rows = None

    @staticmethod
    def _normalize(w):
        total = w.sum()
        return w / total if total > 0 else np.full(len(w), 1.0 / len(w))

    @classmethod
    def from_data(cls, schema, data):
        counts = [data[:, lo:hi].sum(axis=0) for _, lo, hi in schema.categorical_spans]
        sampler = cls(schema, counts)
        sampler._rows = [
            [np.nonzero(data[:, lo + j] == 1.0)[0] for j in range(hi - lo)]
            for _, lo, hi in schema.categorical_spans
        ]
        return sampler

    @property
    def enabled(self):
        return self.width > 0

    def sample(self, batch, rng, by_log_frequency=True):
        """(cond matrix, column choices, category choices) for ``batch`` rows."""
        if not self.enabled:
            empty = np.zeros(batch, dtype=np.int64)
            return np.zeros((batch, 0)), empty, empty
        cols = rng.integers(len(self.spans), size=batch)
        probs = self._log_p if by_log_frequency else self._freq_p
        u = rng.uniform(size=batch)
        cats = np.empty(batch, dtype=np.int64)
        cond = np.zeros((batch, self.width))
        for j, (off, _, _) in enumerate(self.spans):
            sel = cols == j
            if not sel.any():
                continue
            cdf = np.cumsum(probs[j])
            cats[sel] = np.minimum(np.searchsorted(cdf, u[sel] * cdf[-1], side="right"), len(cdf) - 1)
            cond[np.nonzero(sel)[0], off + cats[sel]] = 1.0
        return cond, cols, cats

    def sample_one(self, rng):
        cond, cols, cats = self.sample(1, rng)
        return CondVector(cond[0], int(cols[0]), int(cats[0]))

    def real_rows(self, cols, cats, rng, n_rows):
        """Indices of real rows matching each (column, category) draw.

        Rows are drawn with replacement among the matches; a draw with no
        matching row falls back to a uniform row.
        """
        idx = rng.integers(n_rows, size=len(cols))
        if not self.enabled:
            return idx
        for j in range(len(self.spans)):
            for c in np.unique(cats[cols == j]):
                sel = np.nonzero((cols == j) & (cats == c))[0]
                pool = self._rows[j][c]
                if len(pool):
                    idx[sel] = pool[rng.integers(len(pool), size=len(sel))]
        return idx

    def segment_probs(self, logits):
        """Softmax of the generator logits over each conditionable segment."""
        if not self.enabled:
            return ad.Tensor(np.zeros((logits.shape[0], 0)))
        return ad.concat([ad.softmax(logits[:, lo:hi]) for _, lo, hi in self.spans], axis=1)


# --- model -------------------------------------------------------------------

class GanModel:
    """Generator + critic parameters bound to a schema."""

    def __init__(self, schema, config, cond_counts, rng):
        self.schema = schema
        self.config = config
        self.sampler = ConditionSampler(schema, cond_counts)
        cw = self.sampler.width
        self.generator = ad.MLP(
            [config.noise_dim + cw, *config.generator_dims, schema.width], "relu", rng
        )
        self.critic = ad.MLP(
            [schema.width + cw, *config.critic_dims, 1], "leaky_relu", rng, slope=config.leaky_slope
        )
        self.epochs_trained = 0

    @property
    def cond_width(self):
        return self.sampler.width

    def parameters(self):
        return self.generator.parameters() + self.critic.parameters()

    def digest(self):
        return array_digest([p.data for p in self.parameters()])


@dataclass
class GeneratorOutput:
    rows: ad.Tensor
    logits: ad.Tensor


def generate(model, batch_size, cond, rng):
    """Run the generator on fresh noise; output rows stay on the tape."""
    cfg = model.config
    z = rng.standard_normal((batch_size, cfg.noise_dim))
    logits = model.generator(ad.concat([ad.Tensor(z), ad.Tensor(cond)], axis=1))
    parts = []
    for kind, lo, hi in model.schema.output_segments():
        seg = logits[:, lo:hi]
        parts.append(ad.tanh(seg) if kind == "tanh" else ad.gumbel_softmax(seg, cfg.tau, rng))
    return GeneratorOutput(ad.concat(parts, axis=1), logits)


def critic_score(model, rows, cond):
    return model.critic(ad.concat([rows, ad.Tensor(cond)], axis=1))


def critic_loss(f_real, f_fake):
    """mean(f_fake) - mean(f_real); the critic minimizes this."""
    return ad.sub(ad.mean(ad.as_tensor(f_fake)), ad.mean(ad.as_tensor(f_real)))


def cond_loss_H(probs, cond):
    """Mean cross-entropy of the conditioned category under ``probs``.

    ``probs`` spans the concatenated categorical segments (same layout as
    ``cond``); only the selected column of each row contributes.
    """
    cond = np.asarray(cond, dtype=np.float64)
    if cond.size == 0 or cond.shape[1] == 0:
        return ad.Tensor(0.0)
    picked = ad.sum(ad.mul(probs, cond), axis=1)
    return ad.neg(ad.mean(ad.log(ad.clamp(picked, H_FLOOR, 1.0))))


def generator_loss(f_fake, H, feedback_term=None):
    """-mean(f_fake) + H (+ feedback_term when given)."""
    loss = ad.add(ad.neg(ad.mean(ad.as_tensor(f_fake))), H)
    if feedback_term is not None:
        loss = ad.add(loss, feedback_term)
    return loss


def sample_encoded(model, n, rng):
    """Generate ``n`` encoded rows, conditions drawn from the data frequencies."""
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    out, done = [], 0
    batch = model.config.batch_size
    while done < n:
        b = min(batch, n - done)
        cond, _, _ = model.sampler.sample(b, rng, by_log_frequency=False)
        out.append(generate(model, b, cond, rng).rows.data)
        done += b
    return np.vstack(out)


# --- training -------------------------------------------------------------------

def train(model, data, rng, feedback_hook=None, epoch_callback=None):
    """Train ``model`` on the encoded matrix ``data`` for ``config.epochs`` epochs.

    ``feedback_hook(epoch, live_rows)`` is queried on every generator step
    and returns ``(term, L_f)`` or None; ``term`` is added to the generator
    loss. ``epoch_callback(epoch, model)`` runs after each epoch. Returns
    one dict per epoch with mean critic_loss, gen_loss, H and L_f.
    """
    cfg = model.config
    n = len(data)
    if n < 2:
        raise ConfigError("need at least 2 training rows")
    sampler = ConditionSampler.from_data(model.schema, data)
    model.sampler._rows = sampler._rows
    B = cfg.batch_size
    steps = max(1, n // B)
    betas = (cfg.beta1, cfg.beta2)
    opt_g = ad.Adam(model.generator.parameters(), cfg.generator_lr, betas)
    opt_c = ad.Adam(model.critic.parameters(), cfg.critic_lr, betas)
    c = cfg.clip_value

    trace = []
    for epoch in range(1, cfg.epochs + 1):
        sums = dict(critic_loss=0.0, gen_loss=0.0, H=0.0, L_f=0.0)
        try:
            for _ in range(steps):
                for _ in range(cfg.critic_steps):
                    cond, cols, cats = model.sampler.sample(B, rng)
                    fake = ad.detach(generate(model, B, cond, rng).rows)
                    real = ad.Tensor(data[model.sampler.real_rows(cols, cats, rng, n)])
                    loss_c = critic_loss(critic_score(model, real, cond), critic_score(model, fake, cond))
                    opt_c.zero_grad()
                    loss_c.backward()
                    opt_c.step()
                    for p in opt_c.params:
                        np.clip(p.data, -c, c, out=p.data)

                cond, _, _ = model.sampler.sample(B, rng)
                out = generate(model, B, cond, rng)
                f_fake = critic_score(model, out.rows, cond)
                H = cond_loss_H(model.sampler.segment_probs(out.logits), cond)
                fb = feedback_hook(epoch, out.rows) if feedback_hook is not None else None
                term, lf = fb if fb is not None else (None, 0.0)
                loss_g = generator_loss(f_fake, H, term)
                opt_g.zero_grad()
                opt_c.zero_grad()
                loss_g.backward()
                opt_g.step()

                sums["critic_loss"] += loss_c.item()
                sums["gen_loss"] += loss_g.item()
                sums["H"] += H.item()
                sums["L_f"] += float(lf)
        except NonFiniteError as exc:
            raise NonFiniteError(f"training aborted at epoch {epoch}: {exc}") from exc
        model.epochs_trained = epoch
        trace.append({"epoch": epoch, **{k: v / steps for k, v in sums.items()}})
        if epoch_callback is not None:
            epoch_callback(epoch, model)
    return trace


# --- persistence --------------------------------------------------------------

def _layers_to_list(mlp):
    return [
        {"weight_shape": list(l.weight.shape), "weight": l.weight.data.ravel().tolist(),
         "bias": l.bias.data.ravel().tolist()}
        for l in mlp.layers
    ]


def _layers_from_list(mlp, layers):
    if len(layers) != len(mlp.layers):
        raise ConfigError("model file layer count does not match its architecture")
    for layer, d in zip(mlp.layers, layers):
        w = np.array(d["weight"], dtype=np.float64).reshape(d["weight_shape"])
        b = np.array(d["bias"], dtype=np.float64).reshape(1, -1)
        if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
            raise ConfigError("model file parameter shapes do not match its architecture")
        layer.weight.data = w
        layer.bias.data = b


def model_to_dict(model, extra=None):
    cfg = asdict(model.config)
    cfg["generator_dims"] = list(cfg["generator_dims"])
    cfg["critic_dims"] = list(cfg["critic_dims"])
    d = {
        "format_version": MODEL_FORMAT_VERSION,
        "schema": model.schema.to_dict(),
        "architecture": {
            "noise_dim": cfg["noise_dim"],
            "generator_dims": cfg["generator_dims"],
            "critic_dims": cfg["critic_dims"],
            "cond_width": model.cond_width,
            "encoded_width": model.schema.width,
        },
        "config": cfg,
        "cond_counts": [c.tolist() for c in model.sampler.counts],
        "generator": _layers_to_list(model.generator),
        "critic": _layers_to_list(model.critic),
        "seed": cfg["seed"],
        "epochs_trained": model.epochs_trained,
    }
    if extra:
        d["extra"] = extra
    return d


def model_from_dict(d):
    try:
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ConfigError(f"unsupported model format_version {d.get('format_version')!r}")
        schema = TableSchema.from_dict(d["schema"])
        config = TrainConfig(**d["config"])
        model = GanModel(schema, config, d["cond_counts"], np.random.default_rng(0))
        _layers_from_list(model.generator, d["generator"])
        _layers_from_list(model.critic, d["critic"])
        model.epochs_trained = int(d["epochs_trained"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed model document: {exc}") from None
    return model


def save_model(model, path, extra=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, extra), fh)


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from None
    return model_from_dict(d)
