"""Estimator front-end: ``DSFGAN().fit(frame).sample(n)``."""

from __future__ import annotations

from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from . import gan
from .feedback import FeedbackConfig, FeedbackHook
from .tabular import TabularEncoder, decode_table
from .utils import array_digest, check_random_state, substream


class DSFGAN(BaseEstimator):
    """Conditional tabular GAN with optional downstream-task feedback.

    Parameters
    ----------
    encoder : TabularEncoder
        Column description. Used as-is when already fitted, otherwise a clone
        is fitted on the training frame.
    feedback : bool
        ``False`` trains the base GAN (no hook at all).
    feedback_lambda : float
        Scale of the feedback term; 0 keeps the hook but makes it inert.
    epochs, batch_size, ... :
        See ``gan.TrainConfig`` and ``feedback.FeedbackConfig``.
    random_state : int
        Root seed; initialization, training, feedback and encoding each use
        their own named sub-stream of it.
    """

    def __init__(self, encoder=None, feedback=True, feedback_lambda=1.0, epochs=300, batch_size=500,
                 generator_lr=2e-4, critic_lr=2e-4, critic_steps=1, clip_value=0.01, noise_dim=128,
                 generator_dims=(256, 256), critic_dims=(256, 256), tau=0.2,
                 feedback_fit_steps=200, random_state=0):
        self.encoder = encoder
        self.feedback = feedback
        self.feedback_lambda = feedback_lambda
        self.epochs = epochs
        self.batch_size = batch_size
        self.generator_lr = generator_lr
        self.critic_lr = critic_lr
        self.critic_steps = critic_steps
        self.clip_value = clip_value
        self.noise_dim = noise_dim
        self.generator_dims = generator_dims
        self.critic_dims = critic_dims
        self.tau = tau
        self.feedback_fit_steps = feedback_fit_steps
        self.random_state = random_state

    def _train_config(self):
        return gan.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, generator_lr=self.generator_lr,
            critic_lr=self.critic_lr, critic_steps=self.critic_steps, clip_value=self.clip_value,
            noise_dim=self.noise_dim, generator_dims=tuple(self.generator_dims),
            critic_dims=tuple(self.critic_dims), tau=self.tau, seed=int(self.random_state),
        )

    def fit(self, X, y=None, epoch_callback=None):
        """Fit encoders if needed, encode ``X`` and train the GAN."""
        if self.encoder is None:
            raise ValueError("DSFGAN needs an encoder describing the columns")
        seed = int(self.random_state)
        encoder = self.encoder
        if not hasattr(encoder, "schema_"):
            encoder = clone(encoder).set_params(random_state=seed).fit(X)
        self.encoder_ = encoder
        schema = encoder.schema_
        data = encoder.transform(X, random_state=substream(seed, "encode"))
        return self.fit_encoded(data, schema, epoch_callback)

    def fit_encoded(self, data, schema, epoch_callback=None):
        """Train on an already encoded matrix."""
        seed = int(self.random_state)
        config = self._train_config()
        counts = [data[:, lo:hi].sum(axis=0) for _, lo, hi in schema.categorical_spans]
        model = gan.GanModel(schema, config, counts, substream(seed, "init"))
        if not hasattr(self, "encoder_"):
            self.encoder_ = TabularEncoder.from_schema(schema, seed)
        self.init_digest_ = model.digest()
        self.data_digest_ = array_digest([data])

        hook = None
        if self.feedback:
            fb_config = FeedbackConfig(lam=float(self.feedback_lambda), fit_steps=self.feedback_fit_steps)
            hook = FeedbackHook(
                schema, fb_config, config.epochs, config.batch_size,
                lambda n, rng: gan.sample_encoded(model, n, rng), substream(seed, "feedback"),
            )
        self.loss_trace_ = gan.train(model, data, substream(seed, "train"), hook, epoch_callback)
        self.model_ = model
        self.feedback_hook_ = hook
        return self

    @classmethod
    def from_model(cls, model):
        est = cls(encoder=None, epochs=model.config.epochs, batch_size=model.config.batch_size,
                  random_state=model.config.seed)
        est.model_ = model
        est.encoder_ = TabularEncoder.from_schema(model.schema, model.config.seed)
        return est

    @property
    def schema_(self):
        check_is_fitted(self, "model_")
        return self.model_.schema

    def sample_encoded(self, n, random_state=None):
        check_is_fitted(self, "model_")
        return gan.sample_encoded(self.model_, int(n), check_random_state(random_state))

    def sample(self, n, random_state=None):
        """``n`` decoded synthetic rows as a DataFrame."""
        return decode_table(self.sample_encoded(n, random_state), self.model_.schema)

    def param_digest(self):
        check_is_fitted(self, "model_")
        return self.model_.digest()

    def save(self, path, extra=None):
        check_is_fitted(self, "model_")
        gan.save_model(self.model_, path, extra)

    @classmethod
    def load(cls, path):
        return cls.from_model(gan.load_model(path))

