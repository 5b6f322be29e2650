import os
import tempfile

import numpy as np
import pytest

try:
    import timae
except ImportError:
    import _timae as timae


def small_config():
    c = timae.ModelConfig()
    c.window_len = 32
    c.d_model = 16
    c.d_decoder = 8
    c.n_heads = 2
    c.enc_layers = 1
    c.dec_layers = 1
    return c


def test_synthetic_is_seeded():
    a = timae.synthetic_series(length=500, seed=1)
    b = timae.synthetic_series(length=500, seed=1)
    assert a.shape == (500,)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, timae.synthetic_series(length=500, seed=2))


def test_mask_partitions_positions():
    visible, masked = timae.make_mask(100, "random", 0.75, 3)
    assert len(masked) == 75
    assert sorted(visible + masked) == list(range(100))
    _, tail = timae.make_mask(100, "continuous", 0.25, 0)
    assert tail == list(range(75, 100))
    with pytest.raises(timae.Error):
        timae.make_mask(10, "zigzag", 0.5, 0)


def test_model_shapes_and_determinism():
    model = timae.Model(small_config(), seed=4)
    x = np.random.default_rng(0).standard_normal((2, 32, 1))
    y1 = model.reconstruct(x, list(range(16, 32)))
    y2 = model.reconstruct(x, list(range(16, 32)))
    assert y1.shape == (2, 32, 1)
    np.testing.assert_array_equal(y1, y2)
    f = model.forecast(x[:, :16, :], 16)
    assert f.shape == (2, 16, 1)
    r = model.representations(x, "mean")
    assert r.shape == (2, 16)
    with pytest.raises(timae.DimensionError):
        model.reconstruct(np.zeros((2, 31, 1)), [0])


def test_checkpoint_round_trip():
    model = timae.Model(small_config(), seed=5)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.timae")
        model.save(path)
        loaded = timae.Model.load(path)
        assert loaded.parameters_crc32() == model.parameters_crc32()
        assert loaded.config == model.config
        with open(path, "r+b") as f:
            f.seek(40)
            byte = f.read(1)
            f.seek(40)
            f.write(bytes([byte[0] ^ 0xFF]))
        with pytest.raises(timae.FormatError):
            timae.Model.load(path)


def test_ridge_recovers_linear_map():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 5))
    w = rng.standard_normal((5, 2))
    y = x @ w
    # Mean objective: (X^T X / N + alpha I) W = X^T Y / N.
    est, alpha = timae.ridge_solve(x, y, 0.1)
    n = x.shape[0]
    oracle = np.linalg.solve(x.T @ x / n + 0.1 * np.eye(5), x.T @ y / n)
    np.testing.assert_allclose(est, oracle, rtol=1e-8, atol=1e-10)
    _, chosen = timae.ridge_fit(x[:150], y[:150], x[150:], y[150:])
    assert chosen == 0.1


def test_metrics_and_baselines():
    assert timae.mse(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == pytest.approx(2.5)
    assert timae.mae(np.array([1.0, -2.0]), np.array([0.0, 0.0])) == pytest.approx(1.5)
    h = np.arange(6, dtype=float).reshape(1, 6, 1)
    np.testing.assert_array_equal(timae.last_value_forecast(h, 3), np.full((1, 3, 1), 5.0))
    assert timae.crc32(b"123456789") == 0xCBF43926
