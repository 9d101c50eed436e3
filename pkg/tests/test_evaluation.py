import dataclasses
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdrr.classifier import AutoencoderConfig, ClassifierConfig, ModelVariant, PipelineConfig
from mdrr.evaluation import (
    ABLATION_HEADER,
    SWEEP_HEADER,
    LabeledSplits,
    SweepSpec,
    ablation_csv,
    apply_sweep_value,
    confusion,
    metrics,
    run_ablation,
    run_sweep,
    sweep_csv,
)
from mdrr.mfcc import MfccConfig, extract_mfcc
from mdrr.synthetic import make_tone_corpus
from oracles import tally_metrics

labelings = st.integers(1, 10).flatmap(
    lambda C: st.tuples(st.just(C), st.lists(st.tuples(st.integers(0, C - 1), st.integers(0, C - 1)), min_size=1, max_size=200))
)


def test_confusion_hand_tally():
    cm = confusion([0, 0, 1, 2], [0, 1, 1, 1], 3)
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 0], [0, 1, 0]]
    rep = metrics(cm)
    assert rep.accuracy == 0.5
    assert rep.recall == [0.5, 1.0, 0.0]
    assert rep.macro_recall == 0.5
    assert rep.precision == [1.0, 1 / 3, 0.0]


def test_confusion_edge_cases():
    assert confusion([], [], 3).counts.tolist() == [[0] * 3] * 3
    np.testing.assert_array_equal(confusion([0, 1, 2], [0, 1, 2], 3).counts, np.eye(3, dtype=int))
    with pytest.raises(ValueError):
        confusion([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        confusion([0], [0, 1], 3)
    with pytest.raises(ValueError):
        metrics(confusion([], [], 2))


def test_single_class_all_correct():
    rep = metrics(confusion([0, 0, 0], [0, 0, 0], 1))
    assert rep.row() == [1.0, 1.0, 1.0]


def test_absent_class_excluded_from_macro_means():
    rep = metrics(confusion([0, 0, 1], [0, 0, 1], 3))
    assert rep.row() == [1.0, 1.0, 1.0]
    assert rep.precision[2] == 0.0


def test_never_predicted_class_counts_as_zero_precision():
    rep = metrics(confusion([0, 1, 2], [0, 1, 1], 3))
    assert rep.precision == [1.0, 0.5, 0.0]
    assert rep.macro_precision == pytest.approx(0.5)


@given(labelings)
def test_metrics_match_tally(case):
    C, pairs = case
    t, p = [a for a, _ in pairs], [b for _, b in pairs]
    rep = metrics(confusion(t, p, C))
    mp, mr, acc, prec, rec = tally_metrics(t, p, C)
    assert (rep.macro_precision, rep.macro_recall, rep.accuracy) == (mp, mr, acc)
    assert rep.precision == prec and rep.recall == rec


@given(labelings)
def test_perfect_predictions_all_ones(case):
    C, pairs = case
    y = [a for a, _ in pairs]
    rep = metrics(confusion(y, y, C))
    assert rep.row() == [1.0, 1.0, 1.0]


@given(labelings, st.randoms(use_true_random=False))
def test_accuracy_permutation_invariant(case, rnd):
    C, pairs = case
    perm = list(range(C))
    rnd.shuffle(perm)
    t, p = [a for a, _ in pairs], [b for _, b in pairs]
    a = metrics(confusion(t, p, C)).accuracy
    b = metrics(confusion([perm[x] for x in t], [perm[x] for x in p], C)).accuracy
    assert a == b


# -- ablation / sweeps -------------------------------------------------------------------------


def tiny_splits(seed=0):
    clips = make_tone_corpus(4, seed=seed, duration=0.3)
    feats = [extract_mfcc(c, MfccConfig()) for c in clips]
    labels = [c.label for c in clips]
    idx = np.arange(len(clips))
    tr, va, te = idx % 4 < 2, idx % 4 == 2, idx % 4 == 3
    pick = lambda mask: ([feats[i] for i in idx[mask]], [labels[i] for i in idx[mask]])  # noqa: E731
    return LabeledSplits(pick(tr), pick(va), pick(te))


FAST = PipelineConfig(
    autoencoder=AutoencoderConfig(epochs=2),
    classifier=ClassifierConfig(hidden=4, epochs=2),
)


def test_ablation_table_shape():
    rows = run_ablation(tiny_splits(), FAST, dataset="tones")
    assert [r.variant for r in rows] == ["MD", "MDR", "MDRR"]
    assert all(r.error is None and len(r.report.row()) == 3 for r in rows)
    lines = ablation_csv(rows).splitlines()
    assert lines[0].split(",") == ABLATION_HEADER
    assert len(lines) == 4 and all(line.split(",")[1] == "tones" for line in lines[1:])


def test_ablation_rejects_single_class():
    s = tiny_splits()
    one = (s.train[0], ["x"] * len(s.train[1]))
    with pytest.raises(ValueError):
        run_ablation(LabeledSplits(one, s.val, s.test), FAST)


def test_ablation_rejects_empty_test_split():
    s = tiny_splits()
    with pytest.raises(ValueError, match="non-empty"):
        run_ablation(LabeledSplits(s.train, s.val, ([], [])), FAST)


def test_ablation_reports_failing_variant():
    bad = dataclasses.replace(FAST, classifier=dataclasses.replace(FAST.classifier, mdr_features=11))
    rows = run_ablation(tiny_splits(), bad, variants=[ModelVariant.MD, ModelVariant.MDR])
    assert rows[0].error is None
    assert rows[1].report is None and "divisible" in rows[1].error
    assert "nan" in ablation_csv(rows).splitlines()[2]


def test_sweep_single_cell():
    rows, skipped = run_sweep(SweepSpec("slice_len", [75], FAST, [0]), tiny_splits())
    assert len(rows) == 1 and not skipped
    assert rows[0][:3] == ["slice_len", "75", 0]
    assert sweep_csv(rows).splitlines()[0].split(",") == SWEEP_HEADER


def test_sweep_rows_and_skips(caplog):
    spec = SweepSpec("input_shape", [(20, 10), (10, 10), (40, 5)], FAST, [0, 1])
    with caplog.at_level(logging.WARNING):
        rows, skipped = run_sweep(spec, tiny_splits())
    assert len(rows) == 3 * 2 - len(skipped) == 4
    assert len(skipped) == 2 and all("10x10" in s or "[10,10]" in s for s in skipped)
    assert sum("skipping sweep cell" in r.message for r in caplog.records) == 2
    assert sweep_csv(rows).splitlines()[1].startswith('input_shape,"[20,10]",0,')


def test_sweep_deterministic_per_cell():
    spec = SweepSpec("slice_len", [30], FAST, [3])
    assert run_sweep(spec, tiny_splits())[0] == run_sweep(spec, tiny_splits())[0]


def test_sweep_value_application():
    cfg = apply_sweep_value(PipelineConfig(), "reduced_dim", 300, seed=4)
    assert cfg.autoencoder.reduced_dim == 300 and cfg.classifier.input_shape == (30, 10)
    assert cfg.autoencoder.seed == cfg.classifier.seed == 4
    assert apply_sweep_value(PipelineConfig(), "autoencoder_hidden", [256, 128], 0).autoencoder.hidden_sizes == (256, 128)
    assert apply_sweep_value(PipelineConfig(), "max_dim", 3000, 0).resolved_autoencoder().input_dim == 3000
    with pytest.raises(ValueError):
        apply_sweep_value(PipelineConfig(), "reduced_dim", 205, 0)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("learning_rate", [1])
    with pytest.raises(ValueError):
        SweepSpec("slice_len", [])
