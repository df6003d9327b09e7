"""One-vs-rest logistic regression and the checkpoint format."""
import numpy as np
import pytest

from qsafl import models
from qsafl.datasets import Dataset, synth_blobs


def _toy(n=60, seed=0):
    return synth_blobs(2, n, 4, separation=10.0, seed=seed)


def test_forward_zero_model_outputs_half():
    m = models.MultiLR(3, 4)
    np.testing.assert_allclose(m.forward(np.ones(3)), 0.5, atol=1e-15)


def test_forward_monotone_in_logit():
    m = models.MultiLR(1, 1)
    m.weights[0, 0] = 50.0
    assert m.forward(np.array([1.0]))[0, 0] > 1 - 1e-12
    assert m.forward(np.array([-1.0]))[0, 0] < 1e-12


def test_forward_matches_scalar_oracle():
    rng = np.random.default_rng(8)
    m = models.MultiLR(5, 3)
    m.weights = rng.normal(size=(5, 3))
    m.biases = rng.normal(size=3)
    x = rng.normal(size=5)
    got = m.forward(x)[0]
    for j in range(3):
        logit = sum(m.weights[i, j] * x[i] for i in range(5)) + m.biases[j]
        assert abs(got[j] - 1 / (1 + np.exp(-logit))) < 1e-12


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    m = models.MultiLR(4, 3)
    m.weights = rng.normal(size=(4, 3)) * 0.3
    m.biases = rng.normal(size=3) * 0.3
    x = rng.normal(size=(6, 4))
    y = rng.integers(3, size=6)
    _, gw, gb = m.loss_and_grads(x, y)
    eps = 1e-6
    for _ in range(10):
        i, j = rng.integers(4), rng.integers(3)
        m.weights[i, j] += eps
        up = m.loss_and_grads(x, y)[0]
        m.weights[i, j] -= 2 * eps
        down = m.loss_and_grads(x, y)[0]
        m.weights[i, j] += eps
        fd = (up - down) / (2 * eps)
        assert abs(gw[i, j] - fd) <= 1e-5 * max(1.0, abs(fd))
    for j in range(3):
        m.biases[j] += eps
        up = m.loss_and_grads(x, y)[0]
        m.biases[j] -= 2 * eps
        down = m.loss_and_grads(x, y)[0]
        m.biases[j] += eps
        fd = (up - down) / (2 * eps)
        assert abs(gb[j] - fd) <= 1e-5 * max(1.0, abs(fd))


def test_training_loss_non_increasing_on_separable_data():
    data = _toy()
    m = models.MultiLR(data.dims, 2, batch_size=len(data))  # full-batch descent
    rng = np.random.default_rng(0)
    losses = [m.train_epoch(data, rng) for _ in range(5)]
    assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))


def test_zero_learning_rate_keeps_model():
    data = _toy()
    m = models.MultiLR(data.dims, 2, lr_rate=0.0)
    before = m.get_params().values.copy()
    m.train_epoch(data, np.random.default_rng(1))
    np.testing.assert_array_equal(m.get_params().values, before)


def test_train_epoch_rejects_empty_dataset():
    m = models.MultiLR(4, 2)
    empty = Dataset(np.zeros((0, 4)), np.zeros(0, dtype=int), n_classes=2)
    with pytest.raises(ValueError):
        m.train_epoch(empty, np.random.default_rng(0))
    with pytest.raises(ValueError):
        m.evaluate(empty)


def test_memorizes_separable_toy_set():
    data = _toy()
    m = models.MultiLR(data.dims, 2)
    rng = np.random.default_rng(2)
    for _ in range(30):
        m.train_epoch(data, rng)
    assert m.evaluate(data) == 1.0


def test_untrained_accuracy_near_chance():
    rng = np.random.default_rng(3)
    data = Dataset(rng.uniform(size=(2000, 5)), rng.integers(10, size=2000),
                   n_classes=10)
    m = models.MultiLR(5, 10)
    rng2 = np.random.default_rng(4)
    m.weights = rng2.normal(size=(5, 10)) * 0.01
    acc = m.evaluate(data)
    assert abs(acc - 0.1) < 4 * np.sqrt(0.1 * 0.9 / 2000)


def test_prediction_ties_break_low():
    m = models.MultiLR(2, 3)  # all-zero model: every head outputs 0.5
    pred = m.predict(np.array([[0.3, 0.4]]))
    assert pred[0] == 0


def test_params_roundtrip():
    rng = np.random.default_rng(6)
    m = models.MultiLR(7, 4)
    m.weights = rng.normal(size=(7, 4))
    m.biases = rng.normal(size=4)
    clone = m.clone()
    np.testing.assert_array_equal(clone.get_params().values, m.get_params().values)
    p = m.get_params()
    w, b = p.arrays()
    np.testing.assert_array_equal(w, m.weights)
    np.testing.assert_array_equal(b, m.biases)


def test_model_params_validation():
    with pytest.raises(ValueError):
        models.ModelParams(np.arange(3.0), clip=0.0, layout=((3,),))
    with pytest.raises(ValueError):
        models.ModelParams(np.arange(3.0), clip=1.0, layout=((4,),))
    with pytest.raises(ValueError):
        models.ModelParams(np.array([1.0, np.inf]), clip=1.0, layout=((2,),))


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    p = models.ModelParams(rng.normal(size=10), clip=2.5, layout=((2, 4), (2,)))
    path = tmp_path / "model.qflc"
    models.save_checkpoint(path, p)
    q = models.load_checkpoint(path)
    np.testing.assert_array_equal(q.values, p.values)
    assert q.clip == p.clip and q.layout == p.layout


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.qflc"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(ValueError):
        models.load_checkpoint(path)
