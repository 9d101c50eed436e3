import math

import numpy as np
import pytest

from mdrr import nn_core as nn
from mdrr.nn_core import DivergenceError
from mdrr.reduce import (
    AutoencoderConfig,
    AutoencoderParams,
    decode,
    encode,
    init_autoencoder,
    reconstruction_loss_and_grads,
    reduce_dataset,
    train_autoencoder,
)


def small_params(rng, dims=(4, 3, 2), acts=("tanh", "identity", "identity")):
    layers = [(rng.normal(0, 0.5, (o, i)), rng.normal(0, 0.5, o)) for i, o in zip(dims, dims[1:])]
    half = len(layers) // 2
    full = list(dims) + list(dims[-2::-1])
    dec = [(rng.normal(0, 0.5, (o, i)), rng.normal(0, 0.5, o)) for i, o in zip(full[len(dims) - 1 :], full[len(dims) :])]
    return AutoencoderParams(layers, dec, *acts)


def test_shape_chain_without_hidden():
    p = init_autoencoder(AutoencoderConfig(input_dim=4, hidden_sizes=(), reduced_dim=2), seed=0)
    assert [W.shape for W, _ in p.encoder] == [(2, 4)]
    assert [W.shape for W, _ in p.decoder] == [(4, 2)]


def test_shape_chain_with_hidden():
    cfg = AutoencoderConfig(input_dim=30, hidden_sizes=(12, 6), reduced_dim=3)
    p = init_autoencoder(cfg, seed=1)
    assert cfg.dims == [30, 12, 6, 3, 6, 12, 30]
    assert [W.shape for W, _ in p.encoder + p.decoder] == [(12, 30), (6, 12), (3, 6), (6, 3), (12, 6), (30, 12)]


def test_chain_mismatch_rejected(rng):
    with pytest.raises(ValueError):
        AutoencoderParams([(np.zeros((2, 4)), np.zeros(2))], [(np.zeros((4, 3)), np.zeros(4))])


def test_glorot_bound_and_zero_bias():
    p = init_autoencoder(AutoencoderConfig(input_dim=3000, hidden_sizes=(128,), reduced_dim=200), seed=0)
    W = p.encoder[0][0]
    assert W.shape == (128, 3000)
    assert np.abs(W).max() <= math.sqrt(6 / 3128)
    assert all(np.all(b == 0) for _, b in p.encoder + p.decoder)


def test_init_deterministic():
    cfg = AutoencoderConfig(input_dim=20, hidden_sizes=(8,), reduced_dim=4)
    a, b = init_autoencoder(cfg, seed=5), init_autoencoder(cfg, seed=5)
    c = init_autoencoder(cfg, seed=6)
    for (Wa, _), (Wb, _), (Wc, _) in zip(a.encoder, b.encoder, c.encoder):
        assert Wa.tobytes() == Wb.tobytes()
        assert Wa.tobytes() != Wc.tobytes()


def test_invalid_config():
    with pytest.raises(ValueError):
        AutoencoderConfig(input_dim=4, reduced_dim=4).validate()
    with pytest.raises(ValueError):
        AutoencoderConfig(input_dim=8, reduced_dim=2, hidden_activation="relu6").validate()


def test_zero_params_zero_code_and_reconstruction():
    p = AutoencoderParams([(np.zeros((2, 4)), np.zeros(2))], [(np.zeros((4, 2)), np.zeros(4))])
    assert np.all(encode(p, np.arange(4.0)) == 0)
    assert np.all(decode(p, np.zeros(2)) == 0)


def test_identity_configuration(rng):
    eye = (np.eye(3), np.zeros(3))
    p = AutoencoderParams([eye], [eye], code_activation="identity", output_activation="identity")
    v = rng.normal(size=3)
    assert encode(p, v).tobytes() == v.tobytes()
    assert decode(p, v).tobytes() == v.tobytes()


def test_encode_decode_match_oracle(rng):
    p = small_params(rng)
    v = rng.normal(size=4)

    def layer(W, b, x, act):
        out = [sum(W[r, k] * x[k] for k in range(len(x))) + b[r] for r in range(W.shape[0])]
        return [math.tanh(o) for o in out] if act == "tanh" else out

    h = layer(*p.encoder[0], v, "tanh")
    z = layer(*p.encoder[1], h, "identity")
    np.testing.assert_allclose(encode(p, v), z, rtol=0, atol=1e-12)
    h2 = layer(*p.decoder[0], z, "tanh")
    r = layer(*p.decoder[1], h2, "identity")
    np.testing.assert_allclose(decode(p, np.array(z)), r, rtol=0, atol=1e-12)


def test_dimension_mismatch(rng):
    p = small_params(rng)
    with pytest.raises(ValueError):
        encode(p, np.zeros(5))
    with pytest.raises(ValueError):
        decode(p, np.zeros(3))


@pytest.mark.parametrize("hidden", [(), (3,), (3, 2)])
def test_reconstruction_gradient_check(rng, hidden):
    cfg = AutoencoderConfig(input_dim=5, hidden_sizes=hidden, reduced_dim=2 if hidden != (3, 2) else 1)
    p = init_autoencoder(cfg, seed=int(rng.integers(1000)))
    for W, b in p.encoder + p.decoder:
        b += rng.normal(0, 0.3, b.shape)
    x = rng.normal(size=(4, 5))
    flat = p.as_dict()
    _, grads = reconstruction_loss_and_grads(p, x)
    num = nn.numerical_gradient(lambda: reconstruction_loss_and_grads(p, x)[0], flat)
    for k in flat:
        assert nn.relative_error(grads[k], num[k]) <= 1e-4, k


@pytest.mark.parametrize("standardize", [True, False])
def test_constant_dataset_is_learned(standardize):
    v = np.linspace(-1, 1, 6)
    cfg = AutoencoderConfig(input_dim=6, hidden_sizes=(4,), reduced_dim=2, epochs=200, batch_size=4,
                            learning_rate=0.05, standardize=standardize, seed=0)
    res = train_autoencoder([v] * 8, cfg)
    assert res.loss_history[-1] < 1e-4
    assert len(res.loss_history) == 200


def test_points_on_a_line_linear_model(rng):
    direction = np.array([0.6, 0.8])
    data = [t * direction for t in rng.uniform(-2, 2, 40)]
    # least-squares rank-1 projection residual is zero for collinear data
    X = np.stack(data)
    _, s, _ = np.linalg.svd(X, full_matrices=False)
    assert s[1] < 1e-12
    cfg = AutoencoderConfig(input_dim=2, hidden_sizes=(), reduced_dim=1, code_activation="identity",
                            output_activation="identity", epochs=300, batch_size=8, learning_rate=0.05,
                            standardize=False, seed=0)
    assert train_autoencoder(data, cfg).loss_history[-1] < 1e-3


def test_zero_learning_rate_is_noop(rng):
    cfg = AutoencoderConfig(input_dim=6, hidden_sizes=(3,), reduced_dim=2, epochs=5, learning_rate=0.0, seed=3)
    res = train_autoencoder(list(rng.normal(size=(10, 6))), cfg)
    fresh = init_autoencoder(cfg)
    for k, v in fresh.as_dict().items():
        assert res.params.as_dict()[k].tobytes() == v.tobytes()
    assert len(set(res.loss_history)) == 1


def test_small_rate_loss_trends_down(rng):
    data = list(rng.normal(size=(32, 8)))
    cfg = AutoencoderConfig(input_dim=8, hidden_sizes=(6,), reduced_dim=3, epochs=60, learning_rate=0.01, seed=0)
    h = np.array(train_autoencoder(data, cfg).loss_history)
    smooth = np.convolve(h, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smooth) <= 1e-12)
    assert h[-1] < h[0]


def test_divergence_reports_epoch():
    data = [np.full(4, 1e200), np.full(4, -1e200)]
    cfg = AutoencoderConfig(input_dim=4, hidden_sizes=(), reduced_dim=2, epochs=3, learning_rate=1.0,
                            standardize=False)
    with pytest.raises(DivergenceError) as info:
        train_autoencoder(data, cfg)
    assert info.value.epoch == 0


def test_training_input_checks():
    cfg = AutoencoderConfig(input_dim=4, hidden_sizes=(), reduced_dim=2)
    with pytest.raises(ValueError):
        train_autoencoder([], cfg)
    with pytest.raises(ValueError):
        train_autoencoder([np.zeros(5)], cfg)


def test_reduce_dataset_matches_encode(rng):
    cfg = AutoencoderConfig(input_dim=6, hidden_sizes=(4,), reduced_dim=2, epochs=2, seed=0)
    data = list(rng.normal(size=(7, 6)))
    p = train_autoencoder(data, cfg).params
    codes = reduce_dataset(p, data)
    assert len(codes) == 7
    for v, c in zip(data, codes):
        assert c.shape == (2,)
        np.testing.assert_allclose(c, encode(p, v), rtol=0, atol=1e-14)
    assert reduce_dataset(p, []) == []


def test_save_load_roundtrip(tmp_path, rng):
    cfg = AutoencoderConfig(input_dim=6, hidden_sizes=(4,), reduced_dim=2, epochs=1, seed=0)
    data = list(rng.normal(size=(5, 6)))
    p = train_autoencoder(data, cfg).params
    p.save(tmp_path / "ae.bin")
    q = AutoencoderParams.load(tmp_path / "ae.bin")
    assert q.mean is not None
    for v in data:
        assert encode(q, v).tobytes() == encode(p, v).tobytes()
