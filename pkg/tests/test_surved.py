import json
import math

import numpy as np
import pytest

from conftest import central_diff, max_rel_err
from survdecomp.dataset import SurvivalDataset, split_holdout
from survdecomp.kaplan_meier import km_eval
from survdecomp.losses import GaussianLatent, LossWeights
from survdecomp.surved import (
    ModelConfig,
    SurvedModel,
    TrainingDiverged,
    dumps_checkpoint,
    encode,
    expected_event_time,
    fit,
    loads_checkpoint,
    loss_and_grads,
    predict,
    reparameterize,
    sample_event_times,
    survival_function,
    train_step,
    validation_ci,
)
from survdecomp.synthetic import make_linear


def zero_model(input_dim=3, hidden=(4,), latent=2, **kw):
    cfg = ModelConfig(input_dim=input_dim, hidden_widths=hidden, latent_dim=latent, **kw)
    model = SurvedModel(cfg)
    for v in model.params.values():
        v[...] = 0.0
    return model


def test_zero_weights_give_standard_normal_latent():
    lat = encode(zero_model(), np.array([1.0, -2.0, 3.0]))
    assert lat.mu.tolist() == [0.0, 0.0]
    assert lat.log_var.tolist() == [0.0, 0.0]


def test_hand_forward_pass():
    model = zero_model(input_dim=2, hidden=(2,), latent=1)
    p = model.params
    p["hidden_0_w"][:] = [[1.0, 0.0], [0.0, 1.0]]
    p["mu_w"][:] = [[1.0], [1.0]]
    p["log_var_b"][:] = [0.5]
    lat = encode(model, [0.5, -0.25])
    assert lat.mu[0] == pytest.approx(math.tanh(0.5) + math.tanh(-0.25), abs=1e-15)
    assert lat.log_var[0] == 0.5


def test_reparameterize_examples():
    lat = GaussianLatent(np.array([1.0, 2.0]), np.array([0.0, 0.0]))
    assert reparameterize(lat, [0.5, -1.0]).tolist() == [1.5, 1.0]
    lat = GaussianLatent(np.array([0.0]), np.array([math.log(4.0)]))
    assert reparameterize(lat, [1.0])[0] == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(ValueError):
        reparameterize(lat, [1.0, 2.0])


def test_constant_decoder():
    model = zero_model()
    model.params["dec_b"][0] = 0.7
    rng = np.random.default_rng(0)
    samples = sample_event_times(model, np.ones(3), 50, rng)
    assert samples.shape == (50,)
    assert np.all(samples == 0.7)
    assert expected_event_time(model, np.ones(3), 50) == pytest.approx(0.7, abs=1e-15)


def test_collapsed_variance_is_deterministic():
    model = zero_model()
    model.params["log_var_b"][:] = -1e3
    model.params["mu_b"][:] = [1.0, 2.0]
    model.params["dec_w"][:] = [0.5, 0.25]
    model.params["dec_b"][0] = 0.1
    samples = sample_event_times(model, np.zeros(3), 20, np.random.default_rng(1))
    assert np.all(samples == pytest.approx(0.5 + 0.5 + 0.1, abs=1e-15))


def test_mean_of_samples_matches_decoded_mean():
    model = SurvedModel(ModelConfig(input_dim=3, hidden_widths=(8,), latent_dim=4, seed=2))
    model.params["dec_b"][0] = 20.0  # keep samples far from the clamp at 0
    x = np.array([0.3, -0.1, 0.8])
    lat = encode(model, x)
    sd = math.sqrt(float(np.sum(model.params["dec_w"] ** 2 * np.exp(lat.log_var))))
    n = 20000
    est = expected_event_time(model, x, n, np.random.default_rng(3))
    assert abs(est - model.decode(lat.mu)) < 4 * sd / math.sqrt(n)


def test_samples_never_negative():
    model = zero_model()
    model.params["dec_w"][:] = 5.0
    samples = sample_event_times(model, np.zeros(3), 500, np.random.default_rng(0))
    assert samples.min() == 0.0


def test_survival_function_of_known_samples(monkeypatch):
    import survdecomp.surved as sv

    monkeypatch.setattr(sv, "sample_event_times", lambda *a, **k: np.array([1.0, 2.0, 3.0, 4.0]))
    curve = survival_function(zero_model(), np.zeros(3), n=4)
    assert km_eval(curve, 2.5) == 0.5


def test_batch_shapes_and_bad_input():
    model = zero_model()
    X = np.zeros((5, 3))
    assert sample_event_times(model, X, 7, np.random.default_rng(0)).shape == (5, 7)
    assert predict(model, X).shape == (5,)
    with pytest.raises(ValueError):
        predict(model, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        predict(model, np.array([[np.nan, 0, 0]]))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(input_dim=3, dropout=0.2)
    with pytest.raises(ValueError):
        ModelConfig(input_dim=0)


def test_zero_learning_rate_leaves_params():
    data, _ = make_linear(40, seed=1)
    model = SurvedModel(ModelConfig(input_dim=3, learning_rate=0.0, seed=5))
    before = {k: v.copy() for k, v in model.params.items()}
    train_step(model, data.features(), data.time, data.event, np.random.default_rng(0))
    for k, v in before.items():
        np.testing.assert_array_equal(model.params[k], v)


def test_end_to_end_gradient_finite_difference():
    rng = np.random.default_rng(0)
    cfg = ModelConfig(
        input_dim=3, hidden_widths=(5, 4), latent_dim=2, seed=1, weights=LossWeights(1.0, 0.8, 0.5, 1.5)
    )
    model = SurvedModel(cfg)
    X = rng.normal(size=(6, 3))
    eps = rng.normal(size=(6, 2))
    mu, lv, _ = model._encode(X)
    pred = model.decode(mu + np.exp(0.5 * lv) * eps)
    # targets sit 0.2-0.5 away from the predictions so no hinge is at a kink
    t = pred + rng.choice([-1, 1], size=6) * rng.uniform(0.2, 0.5, size=6)
    e = np.array([True, True, False, True, False, True])
    _, grads = loss_and_grads(model, X, t, e, eps)
    for name, value in model.params.items():

        def f(v, name=name):
            saved = model.params[name]
            model.params[name] = v
            try:
                return loss_and_grads(model, X, t, e, eps)[0].total
            finally:
                model.params[name] = saved

        num = central_diff(f, value, h=1e-6)
        assert max_rel_err(grads[name], num) < 1e-3, name


def test_training_reduces_loss():
    data, _ = make_linear(100, seed=0)
    cfg = ModelConfig(input_dim=3, hidden_widths=(16,), latent_dim=2, learning_rate=0.01, seed=0)
    model = SurvedModel(cfg)
    X, t, e = data.features(), data.time / data.time.max(), data.event
    eval_eps = np.random.default_rng(99).standard_normal((100, 2))
    start = loss_and_grads(model, X, t, e, eval_eps)[0].total
    rng = np.random.default_rng(0)
    for _ in range(200):
        train_step(model, X, t, e, rng)
    end = loss_and_grads(model, X, t, e, eval_eps)[0].total
    assert end < start


def test_divergence_raises_with_state(tmp_path):
    data, _ = make_linear(30, seed=0)
    model = SurvedModel(ModelConfig(input_dim=3, learning_rate=1e300, seed=0))
    with pytest.raises(TrainingDiverged) as info:
        rng = np.random.default_rng(0)
        for _ in range(10):
            train_step(model, data.features(), data.time, data.event, rng)
    info.value.dump(tmp_path / "state.json")
    assert "loss" in json.loads((tmp_path / "state.json").read_text())


def _small_fit_data(seed=0, n=120):
    data, _ = make_linear(n, seed=seed, censor_frac=0.3)
    data = data.replace(time=data.time / data.time.max())
    return split_holdout(data, 0.25, seed=seed)


def test_early_stopping_patience_one():
    train, val = _small_fit_data()
    cfg = ModelConfig(input_dim=3, hidden_widths=(8,), latent_dim=2, max_epochs=40, patience=1, seed=0)
    best, hist = fit(SurvedModel(cfg), train, val)
    cis = [h["val_ci"] for h in hist]
    # stops on the first epoch that fails to improve
    assert len(hist) == 40 or cis[-1] <= max(cis[:-1])
    assert all(cis[k] > max(cis[:k]) for k in range(1, len(cis) - 1))
    assert validation_ci(best, val) == max(cis)


def test_fit_is_deterministic():
    train, val = _small_fit_data(1)
    cfg = ModelConfig(input_dim=3, hidden_widths=(8,), latent_dim=2, max_epochs=5, seed=3)
    a, ha = fit(SurvedModel(cfg), train, val)
    b, hb = fit(SurvedModel(cfg), train, val)
    assert ha == hb
    assert dumps_checkpoint(a) == dumps_checkpoint(b)


def test_checkpoint_round_trip():
    model = SurvedModel(ModelConfig(input_dim=3, hidden_widths=(6, 5), latent_dim=3, seed=7))
    text = dumps_checkpoint(model, {"note": 1})
    loaded, extra = loads_checkpoint(text)
    assert extra == {"note": 1}
    assert dumps_checkpoint(loaded, extra) == text
    X = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(predict(loaded, X), predict(model, X))
    with pytest.raises(ValueError):
        loads_checkpoint(json.dumps({"format": "other"}))


def test_recovers_ordering_on_linear_toy():
    data, _ = make_linear(300, seed=4)
    data = data.replace(time=data.time / data.time.max())
    train, val = split_holdout(data, 0.3, seed=4)
    cfg = ModelConfig(input_dim=3, hidden_widths=(16,), latent_dim=2, max_epochs=30, seed=0)
    best, _ = fit(SurvedModel(cfg), train, val)
    assert validation_ci(best, val) > 0.7


def test_fit_rejects_empty_validation():
    train, val = _small_fit_data()
    with pytest.raises(ValueError):
        fit(zero_model(), train, val.subset(np.array([], dtype=int)))
