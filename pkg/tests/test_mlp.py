from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import fake_samples
from sklearn.base import clone

from j2surrogate.features import FeatureSchema, feature_matrix
from j2surrogate.mlp import (MLPSurrogate, ModelFormatError, SurrogateModel, TrainConfig, TrainingError,
                             backprop, evaluate_mre, init_params, leaky_relu, load_model, loss_mse, mre,
                             network_forward, save_model, train)


def numeric_gradient_check(sizes, seed=0, rows=16, h=1e-6):
    """Largest relative error between central differences and backprop."""
    rng = np.random.default_rng(seed)
    weights, biases = init_params(sizes, rng)
    Z = rng.normal(size=(rows, sizes[0]))
    y = rng.normal(size=rows)
    _, gW, gb = backprop(weights, biases, Z, y)
    worst = 0.0
    for params, grads in ((weights, gW), (biases, gb)):
        for P, G in zip(params, grads):
            for idx in np.ndindex(P.shape):
                keep = P[idx]
                P[idx] = keep + h
                up = loss_mse(network_forward(weights, biases, Z), y)
                P[idx] = keep - h
                down = loss_mse(network_forward(weights, biases, Z), y)
                P[idx] = keep
                num = (up - down) / (2 * h)
                worst = max(worst, abs(num - G[idx]) / max(abs(num), abs(G[idx]), 1e-8))
    return worst


def test_leaky_relu():
    x = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_array_equal(leaky_relu(x, 1.0), x)
    np.testing.assert_allclose(leaky_relu(x), [-0.02, 0.0, 3.0])


def test_loss_examples():
    assert loss_mse([3.0], [1.0]) == 4.0
    assert loss_mse([1.0, 2.0], [2.0, 5.0]) == 5.0
    with pytest.raises(ValueError):
        loss_mse([], [])


def test_mre_examples():
    assert mre([110.0], [100.0]) == pytest.approx(0.10)
    assert mre([90.0, 110.0], [100.0, 100.0]) == pytest.approx(0.10)
    with pytest.raises(ValueError):
        mre([], [])
    with pytest.raises(ValueError):
        mre([1.0], [0.0])


def test_gradient_check():
    assert numeric_gradient_check((6, 8, 8, 1)) < 1e-4


def test_gradient_check_default_widths():
    assert numeric_gradient_check((9, 12, 12, 12, 1), seed=3, rows=8) < 1e-4


def test_zero_weights_predict_label_mean(rng):
    X = rng.normal(size=(60, 3))
    y = rng.uniform(50, 150, 60)
    reg = MLPSurrogate(hidden=(4,), epochs=1).fit(X, y)
    reg.weights_ = [np.zeros_like(W) for W in reg.weights_]
    reg.biases_ = [np.zeros_like(b) for b in reg.biases_]
    np.testing.assert_allclose(reg.predict(X), reg.target_norm_.mean_[0], rtol=1e-15)


def test_linear_network(rng):
    X = rng.normal(size=(200, 2))
    y = 100 + 3 * X[:, 0] - 2 * X[:, 1]
    reg = MLPSurrogate(hidden=(), epochs=400, patience=400, learning_rate=1e-2).fit(X, y)
    assert reg.layer_sizes_ == (2, 1)
    np.testing.assert_allclose(reg.predict(X), y, rtol=1e-3)


def test_constant_labels(rng):
    X = rng.normal(size=(100, 4))
    reg = MLPSurrogate(hidden=(8, 8), epochs=50).fit(X, np.full(100, 150.0))
    assert reg.history_[-1].val_mre < 0.005


def test_learns_a_smooth_sum(rng):
    X = rng.uniform(-1, 1, (1000, 3))
    y = 200 + 10 * X.sum(axis=1)
    reg = MLPSurrogate(hidden=(16, 16), epochs=300, patience=40, seed=1).fit(X, y)
    assert mre(reg.predict(X), y) < 0.01


def test_training_is_deterministic(rng):
    X = rng.normal(size=(80, 3))
    y = 100 + X[:, 0] ** 2
    a = MLPSurrogate(hidden=(8,), epochs=20, seed=5).fit(X, y)
    b = MLPSurrogate(hidden=(8,), epochs=20, seed=5).fit(X, y)
    for Wa, Wb in zip(a.weights_, b.weights_):
        np.testing.assert_array_equal(Wa, Wb)


def test_keeps_best_validation_epoch(rng):
    X = rng.normal(size=(80, 3))
    y = 100 + rng.normal(0, 5, 80)  # pure noise, so validation loss soon rises
    reg = MLPSurrogate(hidden=(32, 32), epochs=200, patience=15).fit(X, y)
    losses = [r.val_loss for r in reg.history_]
    assert reg.history_[reg.best_epoch_ - 1].val_loss == min(losses)
    assert len(losses) - reg.best_epoch_ <= 15


def test_too_few_rows(rng):
    with pytest.raises(TrainingError, match="too few rows"):
        MLPSurrogate().fit(rng.normal(size=(10, 3)), np.ones(10))
    with pytest.raises(TrainingError, match="too few rows"):
        train(fake_samples("closing", 10), "closing")


def test_non_positive_labels(rng):
    with pytest.raises(TrainingError, match="positive"):
        MLPSurrogate().fit(rng.normal(size=(60, 3)), np.zeros(60))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss(rng):
    X = rng.normal(size=(60, 3))
    with pytest.raises(TrainingError, match="non-finite loss at epoch"):
        MLPSurrogate(hidden=(8,), epochs=5, learning_rate=1e300).fit(X, rng.uniform(1, 2, 60))


def test_estimator_params():
    reg = MLPSurrogate(hidden=(5,), seed=9)
    assert reg.get_params()["hidden"] == (5,)
    assert clone(reg).get_params()["seed"] == 9


@pytest.fixture(scope="module")
def model():
    rows = fake_samples("separating", 120, seed=2)
    m, history = train(rows, "separating", TrainConfig(epochs=15), hidden=(8, 8))
    assert len(history) == 15
    return m


class TestModelFile:
    def test_round_trip_is_exact(self, model, tmp_path):
        path = tmp_path / "separating.json"
        save_model(model, path)
        back = load_model(path, "separating")
        X = np.random.default_rng(0).normal(size=(100, 10)) * 1e3
        np.testing.assert_array_equal(model.regressor.predict(X), back.regressor.predict(X))
        assert back.schema == model.schema and back.layer_sizes == (10, 8, 8, 1)

    def test_forward_single_vector(self, model):
        rows = fake_samples("separating", 3, seed=7)
        X = feature_matrix(rows, model.schema.names)
        assert model.forward(X[1]) == model.predict_samples(rows)[1]
        with pytest.raises(ValueError):
            model.forward(X[1][:4])

    def test_truncated(self, model, tmp_path):
        path = tmp_path / "m.json"
        save_model(model, path)
        path.write_text(path.read_text()[:200])
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_version_mismatch(self, model, tmp_path):
        d = model.to_dict()
        d["format_version"] = 2
        path = tmp_path / "m.json"
        path.write_text(json.dumps(d))
        with pytest.raises(ModelFormatError, match="version"):
            load_model(path)

    def test_wrong_type(self, model, tmp_path):
        path = tmp_path / "m.json"
        save_model(model, path)
        with pytest.raises(ModelFormatError, match="expected closing"):
            load_model(path, "closing")

    def test_inconsistent_shapes(self, model):
        d = model.to_dict()
        d["layer_sizes"] = [10, 9, 8, 1]
        with pytest.raises(ModelFormatError):
            SurrogateModel.from_dict(d)

    def test_evaluate_rejects_other_types(self, model):
        assert evaluate_mre(model, fake_samples("separating", 5)) >= 0
        with pytest.raises(ValueError, match="not of type"):
            evaluate_mre(model, fake_samples("closing", 2))

    def test_schema_must_match_type(self, model):
        with pytest.raises(ValueError):
            SurrogateModel("closing", FeatureSchema.for_type("separating"), model.regressor)
