"""Confusion matrices, macro precision/recall, the MD/MDR/MDRR ablation and
one-parameter sweeps over the MDRR pipeline."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .classifier import ModelVariant, PipelineConfig, encode_labels, fit_pipeline
from .mfcc import FeatureMatrix

log = logging.getLogger(__name__)

ABLATION_HEADER = ["variant", "dataset", "precision", "recall", "accuracy"]
SWEEP_HEADER = ["parameter", "value", "seed", "precision", "recall", "accuracy"]
SWEEP_PARAMETERS = ("slice_len", "max_dim", "reduced_dim", "autoencoder_hidden", "input_shape")


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    macro_precision: float
    macro_recall: float
    accuracy: float
    precision: list[float]
    recall: list[float]

    def row(self) -> list[float]:
        return [self.macro_precision, self.macro_recall, self.accuracy]


def confusion(true: Sequence[int], pred: Sequence[int], C: int) -> ConfusionMatrix:
    t = np.asarray(true, dtype=np.int64).reshape(-1)
    p = np.asarray(pred, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ValueError(f"label sequences differ in length: {t.size} vs {p.size}")
    if np.any((t < 0) | (t >= C)) or np.any((p < 0) | (p >= C)):
        raise ValueError(f"labels must lie in [0, {C})")
    counts = np.zeros((C, C), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Macro precision over classes seen in either the true or the predicted
    labels, macro recall over classes present in the true labels; zero
    denominators count as 0."""
    counts = cm.counts
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    diag = np.diag(counts).astype(np.float64)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    # fsum rounds correctly, so the macro means do not depend on summation order
    seen, present = precision[(row > 0) | (col > 0)], recall[row > 0]
    return MetricsReport(
        macro_precision=math.fsum(seen) / len(seen),
        macro_recall=math.fsum(present) / len(present),
        accuracy=float(diag.sum() / cm.total),
        precision=precision.tolist(),
        recall=recall.tolist(),
    )


# ---------------------------------------------------------------------------
# Ablation


@dataclass
class LabeledSplits:
    """Feature matrices and string labels for the three splits."""

    train: tuple[list[FeatureMatrix], list[str]]
    val: tuple[list[FeatureMatrix], list[str]]
    test: tuple[list[FeatureMatrix], list[str]]


@dataclass
class AblationRow:
    variant: str
    dataset: str
    report: MetricsReport | None
    error: str | None = None


def evaluate_pipeline(pipeline, features, labels) -> MetricsReport:
    y = encode_labels(labels, pipeline.labels)
    pred = pipeline.predict(features)
    return metrics(confusion(y, pred, len(pipeline.labels)))


def run_ablation(
    splits: LabeledSplits,
    config: PipelineConfig = PipelineConfig(),
    dataset: str = "dataset",
    variants: Sequence[ModelVariant] = tuple(ModelVariant),
) -> list[AblationRow]:
    """Train each variant on the shared splits and score it on the test split.

    A failing variant yields a row with ``error`` set; the others still run.
    """
    if len(set(splits.train[1])) < 2:
        raise ValueError("ablation needs at least 2 classes in the training split")
    if not splits.val[0] or not splits.test[0]:
        raise ValueError("ablation needs non-empty validation and test splits")
    rows = []
    for v in variants:
        try:
            fit = fit_pipeline(v, *splits.train, *splits.val, config)
            rows.append(AblationRow(v.value, dataset, evaluate_pipeline(fit.pipeline, *splits.test)))
        except Exception as exc:  # noqa: BLE001 - reported per variant
            log.error("variant %s failed: %s", v.value, exc)
            rows.append(AblationRow(v.value, dataset, None, str(exc)))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_HEADER)
    for r in rows:
        vals = r.report.row() if r.report else [math.nan] * 3
        w.writerow([r.variant, r.dataset, *(repr(float(x)) for x in vals)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Sweeps


@dataclass
class SweepSpec:
    parameter: str
    values: list[Any]
    base: PipelineConfig = field(default_factory=PipelineConfig)
    seeds: list[int] = field(default_factory=lambda: [0])

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; choose from {SWEEP_PARAMETERS}")
        if not self.values:
            raise ValueError("sweep value list is empty")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")

    @property
    def repetitions(self) -> int:
        return len(self.seeds)


def apply_sweep_value(base: PipelineConfig, parameter: str, value, seed: int) -> PipelineConfig:
    """Config for one sweep cell; raises ValueError for invalid combinations."""
    r, ae, cl = base.rearrange, base.autoencoder, base.classifier
    if parameter == "slice_len":
        r = replace(r, slice_len=int(value))
    elif parameter == "max_dim":
        r = replace(r, max_dim=int(value))
    elif parameter == "reduced_dim":
        F = cl.input_shape[1]
        if int(value) % F:
            raise ValueError(f"reduced_dim {value} not divisible by input feature size {F}")
        ae = replace(ae, reduced_dim=int(value))
        cl = replace(cl, input_shape=(int(value) // F, F))
    elif parameter == "autoencoder_hidden":
        sizes = (value,) if isinstance(value, int) else tuple(int(v) for v in value)
        ae = replace(ae, hidden_sizes=sizes)
    elif parameter == "input_shape":
        T, F = (int(v) for v in value)
        if T * F != ae.reduced_dim:
            raise ValueError(f"input shape {T}x{F} != reduced_dim {ae.reduced_dim}")
        cl = replace(cl, input_shape=(T, F))
    ae = replace(ae, seed=seed)
    cl = replace(cl, seed=seed)
    cfg = PipelineConfig(r, ae, cl)
    cfg.validate()
    return cfg


def render_value(value) -> str:
    return json.dumps(list(value) if isinstance(value, tuple) else value, separators=(",", ":"))


def _sweep_cell(args):
    spec_param, value, seed, cfg, splits = args
    fit = fit_pipeline(ModelVariant.MDRR, *splits.train, *splits.val, cfg)
    rep = evaluate_pipeline(fit.pipeline, *splits.test)
    return [spec_param, render_value(value), seed, *rep.row()]


def run_sweep(spec: SweepSpec, splits: LabeledSplits, jobs: int = 1) -> tuple[list[list], list[str]]:
    """Retrain MDRR per (value, seed). Returns (rows, skip reasons)."""
    cells, skipped = [], []
    for value in spec.values:
        for seed in spec.seeds:
            try:
                cfg = apply_sweep_value(spec.base, spec.parameter, value, seed)
            except ValueError as exc:
                reason = f"{spec.parameter}={render_value(value)} seed={seed}: {exc}"
                log.warning("skipping sweep cell %s", reason)
                skipped.append(reason)
                continue
            cells.append((spec.parameter, value, seed, cfg, splits))
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    return rows, skipped


def sweep_csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([r[0], r[1], r[2], *(repr(float(x)) for x in r[3:])])
    return buf.getvalue()
