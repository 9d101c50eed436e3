"""MD / MDR / MDRR pipelines around the attention Bi-LSTM classifier.

* MD   - raw MFCC frames, truncated or zero-padded to T frames (F = D)
* MDR  - rearranged + capped vector, reshaped row-major to (T, F)
* MDRR - autoencoder code of the capped vector, reshaped row-major to (T, F)
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import containers, nn_core
from .mfcc import FeatureMatrix
from .nn_core import DivergenceError, NonFiniteError
from .rearrange import CappedVector, RearrangeConfig, rearrange_pipeline
from .reduce import AutoencoderConfig, AutoencoderParams, encode, train_autoencoder

log = logging.getLogger(__name__)


class ModelVariant(str, enum.Enum):
    MD = "MD"
    MDR = "MDR"
    MDRR = "MDRR"

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        try:
            return cls(name.upper())
        except ValueError:
            raise ValueError(f"unknown variant {name!r}; expected one of MD, MDR, MDRR") from None


@dataclass(frozen=True)
class ClassifierConfig:
    input_shape: tuple[int, int] = (20, 10)  # MDRR (T, F); T*F must equal reduced_dim
    md_frames: int = 100  # MD sequence length T
    mdr_features: int = 20  # MDR features per step; T = max_dim / F
    hidden: int = 64
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    plateau_patience: int = 3
    decay_factor: float = 0.5
    early_stop_patience: int = 10
    standardize: bool = True
    seed: int = 0

    def validate(self) -> None:
        T, F = self.input_shape
        if T < 1 or F < 1 or self.md_frames < 1 or self.mdr_features < 1 or self.hidden < 1:
            raise ValueError("shapes and hidden size must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0 or not 0 < self.decay_factor <= 1:
            raise ValueError("learning_rate >= 0 and 0 < decay_factor <= 1 required")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        nn_core.make_optimizer(self.optimizer)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc), repr(r.lr)])
        return buf.getvalue()

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


# ---------------------------------------------------------------------------
# Model


@dataclass
class BiLstmAttentionModel:
    params: nn_core.Params
    n_features: int
    hidden: int
    n_classes: int
    trained: bool = False

    @classmethod
    def init(cls, n_features: int, hidden: int, n_classes: int, seed: int = 0) -> "BiLstmAttentionModel":
        return cls(nn_core.init_model(n_features, hidden, n_classes, seed), n_features, hidden, n_classes)

    def _batch(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 2
        X = X[None] if single else X
        if X.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features per step, got {X.shape[-1]}")
        return X, single

    def forward(self, X):
        """Returns (probabilities, attention context, attention weights)."""
        Xb, single = self._batch(X)
        logits, c, alpha, _ = nn_core.model_forward(self.params, Xb)
        probs = nn_core.softmax(logits, axis=1)
        return (probs[0], c[0], alpha[0]) if single else (probs, c, alpha)

    def copy(self) -> "BiLstmAttentionModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})


def forward_classify(model: BiLstmAttentionModel, X) -> np.ndarray:
    return model.forward(X)[0]


def predict(model: BiLstmAttentionModel, X) -> np.ndarray | int:
    """Argmax class; ties go to the lowest index."""
    probs = forward_classify(model, X)
    out = np.argmax(probs, axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def _mean_loss(model: BiLstmAttentionModel, X: np.ndarray, y: np.ndarray, batch: int = 64):
    total = 0.0
    correct = 0
    for s in range(0, len(X), batch):
        logits, _, _, _ = nn_core.model_forward(model.params, X[s : s + batch])
        losses, probs = nn_core.softmax_cross_entropy(logits, y[s : s + batch])
        total += float(losses.sum())
        correct += int((probs.argmax(axis=1) == y[s : s + batch]).sum())
    return total / len(X), correct / len(X)


def train_classifier(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    n_classes: int,
    config: ClassifierConfig,
) -> tuple[BiLstmAttentionModel, TrainingLog]:
    """Mini-batch training with reduce-on-plateau and early stopping.

    The parameters with the lowest validation loss are returned.
    """
    config.validate()
    if n_classes < 2:
        raise ValueError("training needs at least 2 classes")
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("train and validation splits must be non-empty")
    X_train = np.asarray(X_train, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)

    model = BiLstmAttentionModel.init(X_train.shape[2], config.hidden, n_classes, config.seed)
    opt = nn_core.make_optimizer(config.optimizer)
    rng = np.random.default_rng(config.seed + 1)
    lr = config.learning_rate
    best_loss = np.inf
    best = model.copy()
    since_best = 0
    since_decay = 0
    tlog = TrainingLog()

    for epoch in range(config.epochs):
        order = rng.permutation(len(X_train))
        total = 0.0
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):  # non-finite losses are caught below
                loss, grads, _ = nn_core.model_loss_and_grads(model.params, X_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, f"batch loss {loss}")
            for g in grads.values():
                g /= len(idx)
            try:
                opt.step(model.params, grads, lr)
            except NonFiniteError as exc:
                raise DivergenceError(epoch, str(exc)) from exc
            total += loss
        val_loss, val_acc = _mean_loss(model, X_val, y_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, f"validation loss {val_loss}")
        tlog.records.append(EpochRecord(epoch, total / len(order), val_loss, val_acc, lr))
        log.debug("epoch %d train %.4f val %.4f acc %.3f lr %.2e", epoch, total / len(order), val_loss, val_acc, lr)

        if val_loss < best_loss:
            best_loss = val_loss
            best = model.copy()
            tlog.best_epoch = epoch
            since_best = since_decay = 0
        else:
            since_best += 1
            since_decay += 1
            if since_best >= config.early_stop_patience:
                break
            if since_decay >= config.plateau_patience:
                lr *= config.decay_factor
                since_decay = 0
    best.trained = True
    return best, tlog


# ---------------------------------------------------------------------------
# Variant plumbing


def variant_input_shape(
    variant: ModelVariant,
    classifier: ClassifierConfig,
    rearrange: RearrangeConfig,
    autoencoder: AutoencoderConfig,
    n_coefficients: int,
) -> tuple[int, int]:
    if variant is ModelVariant.MD:
        return classifier.md_frames, n_coefficients
    if variant is ModelVariant.MDR:
        F = classifier.mdr_features
        if rearrange.max_dim % F:
            raise ValueError(f"max_dim {rearrange.max_dim} is not divisible by mdr_features {F}")
        return rearrange.max_dim // F, F
    T, F = classifier.input_shape
    if T * F != autoencoder.reduced_dim:
        raise ValueError(f"input_shape {T}x{F} does not match reduced_dim {autoencoder.reduced_dim}")
    return T, F


def prepare_input(variant: ModelVariant, features, shape: tuple[int, int]) -> np.ndarray:
    """Shape one clip's stage output into a (T, F) sequence.

    ``features`` is the MFCC matrix for MD, the capped vector for MDR and the
    autoencoder code for MDRR.
    """
    T, F = shape
    if variant is ModelVariant.MD:
        values = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
        if values.shape[0] != F:
            raise ValueError(f"MFCC matrix has {values.shape[0]} coefficients, expected {F}")
        out = np.zeros((T, F))
        n = min(T, values.shape[1])
        out[:n] = values[:, :n].T
        return out
    vec = features.values if isinstance(features, CappedVector) else np.asarray(features, dtype=np.float64)
    if vec.size != T * F:
        raise ValueError(f"vector length {vec.size} does not match input shape {T}x{F}")
    return vec.reshape(T, F).copy()


@dataclass(frozen=True)
class PipelineConfig:
    rearrange: RearrangeConfig = RearrangeConfig()
    autoencoder: AutoencoderConfig = AutoencoderConfig()
    classifier: ClassifierConfig = ClassifierConfig()

    def resolved_autoencoder(self) -> AutoencoderConfig:
        return replace(self.autoencoder, input_dim=self.rearrange.max_dim)

    def validate(self) -> None:
        self.rearrange.validate()
        self.resolved_autoencoder().validate()
        self.classifier.validate()
        T, F = self.classifier.input_shape
        if T * F != self.autoencoder.reduced_dim:
            raise ValueError(f"input_shape {T}x{F} does not match reduced_dim {self.autoencoder.reduced_dim}")


@dataclass
class Pipeline:
    """A fitted variant: feature stages, input standardization and the classifier."""

    variant: ModelVariant
    labels: list[str]
    config: PipelineConfig
    input_shape: tuple[int, int]
    model: BiLstmAttentionModel
    autoencoder: AutoencoderParams | None = None
    feat_mean: np.ndarray | None = None
    feat_scale: np.ndarray | None = None
    epoch: int = -1

    def stage_output(self, fm: FeatureMatrix):
        if self.variant is ModelVariant.MD:
            return fm
        capped = rearrange_pipeline(fm, self.config.rearrange)
        if self.variant is ModelVariant.MDR:
            return capped
        return encode(self.autoencoder, capped)

    def prepare(self, features: Sequence[FeatureMatrix]) -> np.ndarray:
        seqs = [prepare_input(self.variant, self.stage_output(fm), self.input_shape) for fm in features]
        X = np.stack(seqs) if seqs else np.empty((0, *self.input_shape))
        if self.feat_mean is not None:
            X = (X - self.feat_mean) / self.feat_scale
        return X

    def predict(self, features: Sequence[FeatureMatrix]) -> np.ndarray:
        X = self.prepare(features)
        if len(X) == 0:
            return np.empty(0, dtype=np.int64)
        return np.asarray(predict(self.model, X)).reshape(-1)

    def embeddings(self, features: Sequence[FeatureMatrix]) -> np.ndarray:
        return self.model.forward(self.prepare(features))[1]

    # serialization -------------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        arrays = {f"model.{k}": v for k, v in self.model.params.items()}
        meta = {
            "model_variant": self.variant.value,
            "labels": self.labels,
            "input_shape": list(self.input_shape),
            "hidden": self.model.hidden,
            "epoch": self.epoch,
            "config": pipeline_config_to_dict(self.config),
        }
        if self.feat_mean is not None:
            arrays["feat.mean"], arrays["feat.scale"] = self.feat_mean, self.feat_scale
        if self.autoencoder is not None:
            ae_arrays, ae_meta = self.autoencoder.to_arrays()
            arrays.update({f"ae.{k}": v for k, v in ae_arrays.items()})
            meta["autoencoder"] = ae_meta
        containers.save(path, arrays, meta)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Pipeline":
        arrays, meta = containers.load(path)
        T, F = meta["input_shape"]
        params = {k[6:]: v for k, v in arrays.items() if k.startswith("model.")}
        model = BiLstmAttentionModel(params, F, meta["hidden"], len(meta["labels"]), trained=True)
        ae = None
        if "autoencoder" in meta:
            ae = AutoencoderParams.from_arrays({k[3:]: v for k, v in arrays.items() if k.startswith("ae.")}, meta["autoencoder"])
        return cls(
            ModelVariant(meta["model_variant"]), list(meta["labels"]),
            pipeline_config_from_dict(meta["config"]), (T, F), model, ae,
            arrays.get("feat.mean"), arrays.get("feat.scale"), meta.get("epoch", -1),
        )


def pipeline_config_to_dict(cfg: PipelineConfig) -> dict:
    d = asdict(cfg)
    d["autoencoder"]["hidden_sizes"] = list(cfg.autoencoder.hidden_sizes)
    d["classifier"]["input_shape"] = list(cfg.classifier.input_shape)
    return d


def pipeline_config_from_dict(d: dict) -> PipelineConfig:
    ae = dict(d.get("autoencoder", {}))
    if "hidden_sizes" in ae:
        ae["hidden_sizes"] = tuple(ae["hidden_sizes"])
    cl = dict(d.get("classifier", {}))
    if "input_shape" in cl:
        cl["input_shape"] = tuple(cl["input_shape"])
    return PipelineConfig(RearrangeConfig(**d.get("rearrange", {})), AutoencoderConfig(**ae), ClassifierConfig(**cl))


@dataclass
class FitResult:
    pipeline: Pipeline
    log: TrainingLog
    autoencoder_history: list[float] = field(default_factory=list)


def encode_labels(labels: Sequence[str], classes: Sequence[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([index[l] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not among the training classes") from None


def fit_pipeline(
    variant: ModelVariant | str,
    train_features: Sequence[FeatureMatrix],
    train_labels: Sequence[str],
    val_features: Sequence[FeatureMatrix],
    val_labels: Sequence[str],
    config: PipelineConfig = PipelineConfig(),
) -> FitResult:
    """Fit every stage of ``variant`` on the training split and train the classifier."""
    variant = ModelVariant.parse(variant) if isinstance(variant, str) else variant
    config.validate()
    classes = sorted(set(train_labels))
    if len(classes) < 2:
        raise ValueError("training needs at least 2 classes")
    y_train = encode_labels(train_labels, classes)
    y_val = encode_labels(val_labels, classes)
    ae_cfg = config.resolved_autoencoder()
    D = train_features[0].D
    shape = variant_input_shape(variant, config.classifier, config.rearrange, ae_cfg, D)

    pipe = Pipeline(variant, classes, config, shape, model=None)  # type: ignore[arg-type]
    ae_history: list[float] = []
    if variant is ModelVariant.MDRR:
        capped = [rearrange_pipeline(fm, config.rearrange) for fm in train_features]
        result = train_autoencoder(capped, ae_cfg)
        pipe.autoencoder, ae_history = result.params, result.loss_history

    X_train = pipe.prepare(train_features)
    if config.classifier.standardize:
        flat = X_train.reshape(-1, shape[1])
        pipe.feat_mean = flat.mean(axis=0)
        scale = flat.std(axis=0)
        scale[scale < 1e-8] = 1.0
        pipe.feat_scale = scale
        X_train = (X_train - pipe.feat_mean) / pipe.feat_scale
    X_val = pipe.prepare(val_features)

    model, tlog = train_classifier(X_train, y_train, X_val, y_val, len(classes), config.classifier)
    pipe.model = model
    pipe.epoch = tlog.best_epoch
    return FitResult(pipe, tlog, ae_history)

