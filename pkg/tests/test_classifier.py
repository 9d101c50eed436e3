import dataclasses

import numpy as np
import pytest

from mdrr import nn_core as nn
from mdrr.classifier import (
    BiLstmAttentionModel,
    ClassifierConfig,
    ModelVariant,
    Pipeline,
    PipelineConfig,
    _mean_loss,
    fit_pipeline,
    forward_classify,
    predict,
    prepare_input,
    train_classifier,
    variant_input_shape,
)
from mdrr.mfcc import FeatureMatrix, MfccConfig, extract_mfcc
from mdrr.rearrange import CappedVector, RearrangeConfig
from mdrr.reduce import AutoencoderConfig
from mdrr.synthetic import make_tone_corpus


def tone_features(n_per_class, seed=0, duration=0.5, classes=2):
    clips = make_tone_corpus(n_per_class, seed=seed, duration=duration)
    keep = sorted({c.label for c in clips})[:classes]
    clips = [c for c in clips if c.label in keep]
    return [extract_mfcc(c, MfccConfig()) for c in clips], [c.label for c in clips]


def separable_sequences(rng, n=24, T=5, F=3):
    y = np.arange(n) % 2
    X = rng.normal(0, 0.3, (n, T, F))
    X[:, :, 0] += np.where(y == 1, 1.5, -1.5)[:, None]
    return X, y


# -- prepare_input -----------------------------------------------------------------


def test_prepare_mdrr_shape(rng):
    code = rng.normal(size=200)
    X = prepare_input(ModelVariant.MDRR, code, (20, 10))
    assert X.shape == (20, 10)
    assert X.size == 200


def test_prepare_md_passthrough(rng):
    M = rng.normal(size=(20, 30))
    X = prepare_input(ModelVariant.MD, FeatureMatrix(M), (30, 20))
    assert X.tobytes() == M.T.tobytes()


def test_prepare_md_pad_and_truncate(rng):
    M = rng.normal(size=(4, 6))
    padded = prepare_input(ModelVariant.MD, FeatureMatrix(M), (9, 4))
    np.testing.assert_array_equal(padded[:6], M.T)
    assert np.all(padded[6:] == 0)
    np.testing.assert_array_equal(prepare_input(ModelVariant.MD, FeatureMatrix(M), (2, 4)), M[:, :2].T)


def test_prepare_mdr_index_enumeration():
    v = CappedVector(np.arange(60.0), 60)
    X = prepare_input(ModelVariant.MDR, v, (6, 10))
    for k in range(60):
        assert X[k // 10, k % 10] == k


def test_prepare_length_mismatch():
    with pytest.raises(ValueError):
        prepare_input(ModelVariant.MDRR, np.zeros(199), (20, 10))
    with pytest.raises(ValueError):
        prepare_input(ModelVariant.MD, FeatureMatrix(np.zeros((5, 3))), (3, 4))


def test_variant_input_shapes():
    cl, r, ae = ClassifierConfig(), RearrangeConfig(), AutoencoderConfig()
    assert variant_input_shape(ModelVariant.MD, cl, r, ae, 20) == (100, 20)
    assert variant_input_shape(ModelVariant.MDR, cl, r, ae, 20) == (105, 20)
    assert variant_input_shape(ModelVariant.MDRR, cl, r, ae, 20) == (20, 10)
    with pytest.raises(ValueError):
        variant_input_shape(ModelVariant.MDRR, dataclasses.replace(cl, input_shape=(10, 10)), r, ae, 20)


def test_variant_parse():
    assert ModelVariant.parse("mdrr") is ModelVariant.MDRR
    with pytest.raises(ValueError):
        ModelVariant.parse("MDX")


# -- forward / predict ----------------------------------------------------------------


def test_single_class_probability_is_one(rng):
    m = BiLstmAttentionModel.init(3, 4, 1, seed=0)
    assert forward_classify(m, rng.normal(size=(5, 3))).tolist() == [1.0]


def test_zero_params_uniform(rng):
    m = BiLstmAttentionModel.init(3, 4, 5, seed=0)
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    np.testing.assert_allclose(forward_classify(m, rng.normal(size=(4, 3))), 0.2, rtol=0, atol=1e-15)


def test_probabilities_sum_to_one(rng):
    m = BiLstmAttentionModel.init(3, 4, 4, seed=2)
    P = forward_classify(m, rng.normal(size=(10, 6, 3)))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_feature_width_checked(rng):
    m = BiLstmAttentionModel.init(3, 4, 2, seed=0)
    with pytest.raises(ValueError):
        forward_classify(m, rng.normal(size=(5, 4)))


def set_output_bias(m, bias):
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    m.params["out.b"] = np.log(np.asarray(bias, dtype=np.float64))


def test_predict_argmax_and_tie(rng):
    m = BiLstmAttentionModel.init(2, 3, 3, seed=0)
    set_output_bias(m, [0.2, 0.5, 0.3])
    assert predict(m, rng.normal(size=(4, 2))) == 1
    m2 = BiLstmAttentionModel.init(2, 3, 2, seed=0)
    set_output_bias(m2, [0.5, 0.5])
    assert predict(m2, rng.normal(size=(4, 2))) == 0


def test_predict_shift_invariant(rng):
    m = BiLstmAttentionModel.init(2, 3, 4, seed=1)
    X = rng.normal(size=(6, 5, 2))
    before = predict(m, X)
    m.params["out.b"] = m.params["out.b"] + 7.25
    assert np.array_equal(predict(m, X), before)


# -- training ------------------------------------------------------------------------------------


SMALL = ClassifierConfig(hidden=6, epochs=40, batch_size=8, learning_rate=1e-2, seed=0)


def test_training_is_deterministic(rng):
    X, y = separable_sequences(rng)
    a, la = train_classifier(X, y, X[:8], y[:8], 2, SMALL)
    b, lb = train_classifier(X, y, X[:8], y[:8], 2, SMALL)
    assert la.to_csv() == lb.to_csv()
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_learning_rate_schedule(rng):
    X, y = separable_sequences(rng)
    Xv, yv = X[:6].copy(), 1 - y[:6]  # mislabeled validation set forces plateaus
    cfg = dataclasses.replace(SMALL, epochs=30, early_stop_patience=30)
    _, tlog = train_classifier(X, y, Xv, yv, 2, cfg)
    lrs = [r.lr for r in tlog.records]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert lrs[-1] < lrs[0]
    _, flat = train_classifier(X, y, Xv, yv, 2, dataclasses.replace(cfg, decay_factor=1.0))
    assert {r.lr for r in flat.records} == {cfg.learning_rate}


def test_early_stopping(rng):
    X, y = separable_sequences(rng)
    cfg = dataclasses.replace(SMALL, epochs=200, early_stop_patience=2, plateau_patience=1)
    _, tlog = train_classifier(X, y, X[:6], 1 - y[:6], 2, cfg)
    assert len(tlog.records) == tlog.best_epoch + 3
    assert len(tlog.records) < 200


def test_best_checkpoint_contract(rng):
    X, y = separable_sequences(rng)
    Xv, yv = separable_sequences(np.random.default_rng(9), n=10)
    model, tlog = train_classifier(X, y, Xv, yv, 2, SMALL)
    best = min(r.val_loss for r in tlog.records)
    val_loss, _ = _mean_loss(model, Xv, yv)
    assert val_loss == best
    assert tlog.records[tlog.best_epoch].val_loss == best
    assert model.trained


def test_training_rejects_bad_inputs(rng):
    X, y = separable_sequences(rng)
    with pytest.raises(ValueError):
        train_classifier(X, np.zeros_like(y), X, y, 1, SMALL)
    with pytest.raises(ValueError):
        train_classifier(X[:0], y[:0], X, y, 2, SMALL)


def test_divergence_aborts(rng):
    X, y = separable_sequences(rng)
    X[0, 0, 0] = np.inf
    with pytest.raises(nn.DivergenceError):
        train_classifier(X, y, X, y, 2, SMALL)


@pytest.mark.parametrize("variant", list(ModelVariant))
def test_overfits_tiny_toy_set(variant):
    feats, labels = tone_features(2, duration=0.3)
    cfg = PipelineConfig(
        classifier=ClassifierConfig(hidden=16, epochs=150, learning_rate=1e-2, early_stop_patience=150),
        autoencoder=AutoencoderConfig(epochs=30),
    )
    fit = fit_pipeline(variant, feats, labels, feats, labels, cfg)
    pred = fit.pipeline.predict(feats)
    assert [fit.pipeline.labels[i] for i in pred] == labels


# -- pipeline ------------------------------------------------------------------------------------


def test_pipeline_save_load_roundtrip(tmp_path):
    feats, labels = tone_features(3, duration=0.3)
    cfg = PipelineConfig(classifier=ClassifierConfig(hidden=4, epochs=3), autoencoder=AutoencoderConfig(epochs=2))
    fit = fit_pipeline(ModelVariant.MDRR, feats, labels, feats, labels, cfg)
    fit.pipeline.save(tmp_path / "ckpt.bin")
    back = Pipeline.load(tmp_path / "ckpt.bin")
    assert back.variant is ModelVariant.MDRR
    assert back.labels == fit.pipeline.labels
    assert back.config == cfg
    np.testing.assert_array_equal(back.prepare(feats), fit.pipeline.prepare(feats))
    np.testing.assert_array_equal(back.predict(feats), fit.pipeline.predict(feats))


def test_fit_pipeline_label_checks():
    feats, labels = tone_features(2, duration=0.3)
    with pytest.raises(ValueError):
        fit_pipeline("MD", feats, ["a"] * len(feats), feats, ["a"] * len(feats))
    with pytest.raises(ValueError):
        fit_pipeline("MD", feats, labels, feats, ["unknown"] * len(feats))
