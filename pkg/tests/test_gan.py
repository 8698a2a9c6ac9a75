import math

import numpy as np
import pandas as pd
import pytest

from dsfgan import autodiff as ad
from dsfgan import gan
from dsfgan.exceptions import ConfigError, NonFiniteError
from dsfgan.tabular import ColumnMeta, Mixture, TableSchema, TabularEncoder

from oracles import numeric_grad, rel_err

TINY = dict(noise_dim=4, generator_dims=(8,), critic_dims=(8,))


def _schema(cat_sizes, continuous=True):
    cols = [ColumnMeta(f"c{i}", "categorical", categories=[f"v{j}" for j in range(k)])
            for i, k in enumerate(cat_sizes)]
    if continuous:
        cols.append(ColumnMeta("x", "continuous", mixture=Mixture(np.array([0.0]), np.array([1.0]),
                                                                    np.array([1.0]))))
    cols[-1].is_target = True
    return TableSchema(cols, "regression" if continuous else "classification")


# --- condition sampling ------------------------------------------------------------

def test_single_category_forced():
    sampler = gan.ConditionSampler(_schema([1]), [np.array([5])])
    rng = np.random.default_rng(0)
    for _ in range(20):
        cv = sampler.sample_one(rng)
        assert cv.vector.tolist() == [1.0]
        assert (cv.column, cv.category) == (0, 0)


def test_columns_chosen_uniformly():
    sampler = gan.ConditionSampler(_schema([2, 3]), [np.array([5, 5]), np.array([1, 1, 1])])
    cond, cols, _ = sampler.sample(10_000, np.random.default_rng(1))
    assert abs(np.mean(cols == 0) - 0.5) < 0.02
    assert np.all(cond.sum(axis=1) == 1)
    # the 1 lies inside the chosen column's segment
    assert np.all(cond[cols == 0, :2].sum(axis=1) == 1)
    assert np.all(cond[cols == 1, 2:].sum(axis=1) == 1)


def test_log_frequency_weights():
    sampler = gan.ConditionSampler(_schema([2]), [np.array([90, 10])])
    _, _, cats = sampler.sample(10_000, np.random.default_rng(2))
    expected = math.log(91) / (math.log(91) + math.log(11))
    assert abs(np.mean(cats == 0) - expected) < 0.02


def test_original_frequencies_for_sampling():
    sampler = gan.ConditionSampler(_schema([2]), [np.array([90, 10])])
    _, _, cats = sampler.sample(10_000, np.random.default_rng(3), by_log_frequency=False)
    assert abs(np.mean(cats == 0) - 0.9) < 0.02


def test_no_categorical_columns_disables_condition():
    sampler = gan.ConditionSampler(_schema([]), [])
    cond, _, _ = sampler.sample(4, np.random.default_rng(0))
    assert cond.shape == (4, 0)
    assert not sampler.enabled


# --- generator ----------------------------------------------------------------------

@pytest.fixture
def tiny_model():
    schema = _schema([3, 2])
    cfg = gan.TrainConfig(epochs=2, batch_size=4, **TINY)
    return gan.GanModel(schema, cfg, [np.array([1, 1, 1]), np.array([1, 1])], np.random.default_rng(0))


def test_generate_shapes_and_segments(tiny_model):
    cond, _, _ = tiny_model.sampler.sample(16, np.random.default_rng(1))
    out = gan.generate(tiny_model, 16, cond, np.random.default_rng(2)).rows.data
    assert out.shape == (16, tiny_model.schema.width)
    for kind, lo, hi in tiny_model.schema.output_segments():
        if kind == "softmax":
            np.testing.assert_allclose(out[:, lo:hi].sum(axis=1), 1.0, atol=1e-6)
        else:
            assert np.all(np.abs(out[:, lo:hi]) <= 1)


def test_generate_is_deterministic(tiny_model):
    cond, _, _ = tiny_model.sampler.sample(8, np.random.default_rng(1))
    a = gan.generate(tiny_model, 8, cond, np.random.default_rng(5)).rows.data
    b = gan.generate(tiny_model, 8, cond, np.random.default_rng(5)).rows.data
    np.testing.assert_array_equal(a, b)


# --- losses ---------------------------------------------------------------------------

def test_critic_loss_values():
    assert gan.critic_loss(ad.Tensor([0.3, 0.3]), ad.Tensor([0.3, 0.3])).item() == 0.0
    assert gan.critic_loss(ad.Tensor([1.0, 1.0]), ad.Tensor([0.0, 0.0])).item() == -1.0


def test_critic_loss_gradient(tiny_model):
    rng = np.random.default_rng(4)
    real = rng.normal(size=(5, tiny_model.schema.width))
    fake = rng.normal(size=(5, tiny_model.schema.width))
    cond, _, _ = tiny_model.sampler.sample(5, rng)
    params = tiny_model.critic.parameters()

    def loss():
        return gan.critic_loss(gan.critic_score(tiny_model, ad.Tensor(real), cond),
                               gan.critic_score(tiny_model, ad.Tensor(fake), cond))

    tiny_model.critic.zero_grad()
    loss().backward()
    analytic = [p.grad.copy() for p in params]
    numeric = numeric_grad(lambda: loss().item(), [p.data for p in params])
    assert rel_err(analytic, numeric) < 1e-5


def test_cond_loss_perfect_match():
    cond = np.array([[0.0, 1.0, 0.0]])
    assert gan.cond_loss_H(ad.Tensor(cond), cond).item() <= 1e-6


def test_cond_loss_uniform_is_log_k():
    cond = np.array([[0.0, 0.0, 1.0, 0.0]])
    assert abs(gan.cond_loss_H(ad.Tensor(np.full((1, 4), 0.25)), cond).item() - math.log(4)) < 1e-9


def test_cond_loss_batch_example():
    probs = ad.Tensor([[0.5, 0.5], [0.9, 0.1]])
    cond = np.array([[1.0, 0.0], [1.0, 0.0]])
    expected = -(math.log(0.5) + math.log(0.9)) / 2
    assert gan.cond_loss_H(probs, cond).item() == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.3993, abs=1e-4)


def test_cond_loss_empty_condition():
    assert gan.cond_loss_H(ad.Tensor(np.zeros((3, 0))), np.zeros((3, 0))).item() == 0.0


def test_cond_loss_gradient_confined_to_conditioned_segment(tiny_model):
    cond = np.zeros((2, 5))
    cond[:, 3] = 1.0  # second categorical column, first category
    logits = ad.Tensor(np.random.default_rng(0).normal(size=(2, tiny_model.schema.width)), requires_grad=True)
    gan.cond_loss_H(tiny_model.sampler.segment_probs(logits), cond).backward()
    lo, hi = tiny_model.schema.span("c1")
    outside = np.ones(tiny_model.schema.width, bool)
    outside[lo:hi] = False
    assert np.all(logits.grad[:, outside] == 0)
    assert np.all(logits.grad[:, lo:hi] != 0)


def test_generator_loss_arithmetic():
    loss = gan.generator_loss(ad.Tensor([0.3, 0.3]), ad.Tensor(0.2), ad.Tensor(0.5))
    assert loss.item() == pytest.approx(0.4, abs=1e-15)


def test_generator_loss_feedback_shift_and_gradient():
    w = np.array([0.4, -1.2])

    def parts(wt):
        f_fake = ad.mul(wt, 2.0)
        H = ad.mean(ad.mul(wt, wt))
        fb = ad.mul(ad.sum(ad.tanh(wt)), 0.7)
        return f_fake, H, fb

    leaf = ad.Tensor(w, requires_grad=True)
    gan.generator_loss(*parts(leaf)[:2]).backward()
    base_grad = leaf.grad.copy()

    leaf2 = ad.Tensor(w, requires_grad=True)
    f, H, fb = parts(leaf2)
    with_fb = gan.generator_loss(f, H, fb)
    without = gan.generator_loss(*parts(ad.Tensor(w))[:2]).item()
    assert with_fb.item() - without == pytest.approx(fb.item(), abs=1e-15)
    with_fb.backward()
    fb_grad = numeric_grad(lambda: ad.mul(ad.sum(ad.tanh(ad.Tensor(w))), 0.7).item(), [w])[0]
    np.testing.assert_allclose(leaf2.grad - base_grad, fb_grad, atol=1e-9)


def test_zero_feedback_term_changes_nothing():
    w = np.array([0.4, -1.2])
    grads = []
    for term in (None, ad.Tensor(0.0)):
        leaf = ad.Tensor(w, requires_grad=True)
        loss = gan.generator_loss(ad.mul(leaf, 2.0), ad.mean(ad.mul(leaf, leaf)), term)
        loss.backward()
        grads.append((loss.item(), leaf.grad.tobytes()))
    assert grads[0] == grads[1]


# --- training -------------------------------------------------------------------------

def _toy_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    cat = rng.choice(["a", "b", "c"], n, p=[0.5, 0.3, 0.2])
    x = np.where(cat == "a", -2.0, np.where(cat == "b", 0.0, 2.0)) + rng.normal(0, 0.3, n)
    return pd.DataFrame({"cat": cat, "x": x})


def _toy_model(epochs, seed=0, **kw):
    frame = _toy_data()
    enc = TabularEncoder(columns={"cat": "categorical", "x": "continuous"}, target="x",
                         task="regression", random_state=seed).fit(frame)
    data = enc.transform(frame)
    counts = [data[:, lo:hi].sum(axis=0) for _, lo, hi in enc.schema_.categorical_spans]
    cfg = gan.TrainConfig(epochs=epochs, batch_size=50, seed=seed, **{**TINY, **kw})
    model = gan.GanModel(enc.schema_, cfg, counts, np.random.default_rng(seed))
    return model, data


def test_zero_hook_is_bitwise_identical():
    digests = []
    for hook in (None, lambda epoch, rows: (ad.Tensor(0.0), 0.0)):
        model, data = _toy_model(4)
        gan.train(model, data, np.random.default_rng(1), hook)
        digests.append(model.digest())
    assert digests[0] == digests[1]


def test_critic_weights_clipped_after_every_update(monkeypatch):
    model, data = _toy_model(3, clip_value=0.01)
    seen = []
    original = gan.critic_loss

    def checking(f_real, f_fake):
        seen.append(max(np.abs(p.data).max() for p in model.critic.parameters()))
        return original(f_real, f_fake)

    monkeypatch.setattr(gan, "critic_loss", checking)
    gan.train(model, data, np.random.default_rng(0))
    seen.append(max(np.abs(p.data).max() for p in model.critic.parameters()))
    # first entry is the unclipped initialization
    assert len(seen) == 3 * 4 + 1
    assert max(seen[1:]) <= 0.01


def test_training_is_deterministic():
    results = []
    for _ in range(2):
        model, data = _toy_model(3)
        trace = gan.train(model, data, np.random.default_rng(11))
        results.append((model.digest(), trace))
    assert results[0] == results[1]


def test_trace_columns():
    model, data = _toy_model(2)
    trace = gan.train(model, data, np.random.default_rng(0))
    assert [row["epoch"] for row in trace] == [1, 2]
    assert all(tuple(row) == gan.TRACE_COLUMNS for row in trace)
    assert all(row["L_f"] == 0.0 for row in trace)


def test_non_finite_abort_reports_epoch():
    model, data = _toy_model(3)

    def bad_hook(epoch, rows):
        if epoch == 2:
            ad.log(ad.Tensor(0.0))
        return None

    with pytest.raises(NonFiniteError, match="epoch 2"):
        gan.train(model, data, np.random.default_rng(0), bad_hook)


def test_conditional_generation_is_learned():
    defaults = gan.TrainConfig()
    model, data = _toy_model(200, noise_dim=defaults.noise_dim, generator_dims=defaults.generator_dims,
                             critic_dims=defaults.critic_dims)
    gan.train(model, data, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    cond, _, cats = model.sampler.sample(1000, rng, by_log_frequency=False)
    out = gan.generate(model, 1000, cond, rng).rows.data
    lo, hi = model.schema.span("cat")
    match = np.mean(out[:, lo:hi].argmax(axis=1) == cats)
    assert match >= 0.8


# --- persistence ------------------------------------------------------------------------

def test_model_round_trip_is_bit_exact(tmp_path):
    model, data = _toy_model(2)
    gan.train(model, data, np.random.default_rng(0))
    path = tmp_path / "m.json"
    gan.save_model(model, path)
    back = gan.load_model(path)
    assert back.digest() == model.digest()
    assert back.epochs_trained == 2
    assert back.schema.to_dict() == model.schema.to_dict()
    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    np.testing.assert_array_equal(gan.sample_encoded(model, 7, rng_a), gan.sample_encoded(back, 7, rng_b))


def test_malformed_model_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version": 1, "schema": {}}')
    with pytest.raises(ConfigError):
        gan.load_model(path)
    path.write_text("not json")
    with pytest.raises(ConfigError):
        gan.load_model(path)


@pytest.mark.parametrize("field, value", [("epochs", 1), ("batch_size", 1), ("clip_value", 0.0)])
def test_train_config_validation(field, value):
    with pytest.raises(ConfigError):
        gan.TrainConfig(**{field: value})
