"""Fully connected autoencoder used to shrink capped feature vectors.

The encoder maps ``input_dim -> hidden_sizes... -> reduced_dim`` and the
decoder mirrors it back. Hidden layers use ``hidden_activation``; the code
layer and the reconstruction layer use ``code_activation`` and
``output_activation``. Training minimises the mean squared reconstruction
error with mini-batch gradient descent.
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import containers
from .nn_core import DivergenceError, glorot_uniform, make_optimizer
from .rearrange import CappedVector

log = logging.getLogger(__name__)

ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y**2),
    "identity": (lambda z: z, lambda y: np.ones_like(y)),
}


@dataclass(frozen=True)
class AutoencoderConfig:
    input_dim: int = 2100
    hidden_sizes: tuple[int, ...] = (128,)
    reduced_dim: int = 200
    hidden_activation: str = "tanh"
    code_activation: str = "identity"
    output_activation: str = "identity"
    epochs: int = 60
    batch_size: int = 16
    learning_rate: float = 0.01
    optimizer: str = "sgd"
    standardize: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.reduced_dim < 1 or self.reduced_dim >= self.input_dim:
            raise ValueError(f"need 1 <= reduced_dim < input_dim, got {self.reduced_dim}, {self.input_dim}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        for a in (self.hidden_activation, self.code_activation, self.output_activation):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate >= 0 required")

    @property
    def dims(self) -> list[int]:
        h = list(self.hidden_sizes)
        return [self.input_dim, *h, self.reduced_dim, *reversed(h), self.input_dim]


Layer = tuple[np.ndarray, np.ndarray]


@dataclass
class AutoencoderParams:
    encoder: list[Layer]
    decoder: list[Layer]
    hidden_activation: str = "tanh"
    code_activation: str = "identity"
    output_activation: str = "identity"
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        layers = self.encoder + self.decoder
        for (W1, _), (W2, _) in zip(layers, layers[1:]):
            if W1.shape[0] != W2.shape[1]:
                raise ValueError(f"layer dimensions do not chain: {W1.shape} -> {W2.shape}")
        for W, b in layers:
            if b.shape != (W.shape[0],):
                raise ValueError(f"bias shape {b.shape} does not match weight {W.shape}")

    @property
    def input_dim(self) -> int:
        return self.encoder[0][0].shape[1]

    @property
    def reduced_dim(self) -> int:
        return self.encoder[-1][0].shape[0]

    def activations(self) -> list[str]:
        ne, nd = len(self.encoder), len(self.decoder)
        return (
            [self.hidden_activation] * (ne - 1) + [self.code_activation]
            + [self.hidden_activation] * (nd - 1) + [self.output_activation]
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        d = {}
        for prefix, layers in (("enc", self.encoder), ("dec", self.decoder)):
            for i, (W, b) in enumerate(layers):
                d[f"{prefix}{i}.W"] = W
                d[f"{prefix}{i}.b"] = b
        return d

    def copy(self) -> "AutoencoderParams":
        cp = lambda layers: [(W.copy(), b.copy()) for W, b in layers]  # noqa: E731
        return AutoencoderParams(
            cp(self.encoder), cp(self.decoder), self.hidden_activation, self.code_activation,
            self.output_activation,
            None if self.mean is None else self.mean.copy(),
            None if self.scale is None else self.scale.copy(),
            self.seed,
        )

    def to_arrays(self) -> tuple[dict[str, np.ndarray], dict]:
        arrays = dict(self.as_dict())
        if self.mean is not None:
            arrays["mean"], arrays["scale"] = self.mean, self.scale
        meta = {
            "n_encoder": len(self.encoder), "n_decoder": len(self.decoder),
            "shapes": {k: list(v.shape) for k, v in arrays.items()},
            "hidden_activation": self.hidden_activation, "code_activation": self.code_activation,
            "output_activation": self.output_activation, "seed": self.seed,
        }
        return arrays, meta

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], meta: dict) -> "AutoencoderParams":
        enc = [(arrays[f"enc{i}.W"], arrays[f"enc{i}.b"]) for i in range(meta["n_encoder"])]
        dec = [(arrays[f"dec{i}.W"], arrays[f"dec{i}.b"]) for i in range(meta["n_decoder"])]
        return cls(
            enc, dec, meta["hidden_activation"], meta["code_activation"], meta["output_activation"],
            arrays.get("mean"), arrays.get("scale"), meta.get("seed", 0),
        )

    def save(self, path: str | os.PathLike) -> None:
        arrays, meta = self.to_arrays()
        containers.save(path, arrays, meta)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AutoencoderParams":
        return cls.from_arrays(*containers.load(path))


def init_autoencoder(config: AutoencoderConfig, seed: int | None = None) -> AutoencoderParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    dims = config.dims
    layers = [(glorot_uniform(rng, o, i), np.zeros(o)) for i, o in zip(dims, dims[1:])]
    half = len(layers) // 2
    return AutoencoderParams(
        layers[:half], layers[half:], config.hidden_activation, config.code_activation,
        config.output_activation, seed=config.seed if seed is None else seed,
    )


def _as_matrix(v) -> tuple[np.ndarray, bool]:
    if isinstance(v, CappedVector):
        v = v.values
    x = np.asarray(v, dtype=np.float64)
    return (x[None], True) if x.ndim == 1 else (x, False)


def _standardized(params: AutoencoderParams, x: np.ndarray) -> np.ndarray:
    if params.mean is None:
        return x
    return (x - params.mean) / params.scale


def _forward(layers: list[Layer], acts: list[str], x: np.ndarray) -> list[np.ndarray]:
    outs = [x]
    for (W, b), a in zip(layers, acts):
        outs.append(ACTIVATIONS[a][0](outs[-1] @ W.T + b))
    return outs


def encode(params: AutoencoderParams, v) -> np.ndarray:
    x, single = _as_matrix(v)
    if x.shape[1] != params.input_dim:
        raise ValueError(f"input length {x.shape[1]} != autoencoder input_dim {params.input_dim}")
    acts = params.activations()[: len(params.encoder)]
    z = _forward(params.encoder, acts, _standardized(params, x))[-1]
    return z[0] if single else z


def decode(params: AutoencoderParams, z) -> np.ndarray:
    """Reconstruction in the standardized input space."""
    x, single = _as_matrix(z)
    if x.shape[1] != params.reduced_dim:
        raise ValueError(f"code length {x.shape[1]} != reduced_dim {params.reduced_dim}")
    acts = params.activations()[len(params.encoder) :]
    out = _forward(params.decoder, acts, x)[-1]
    return out[0] if single else out


def reconstruction_loss_and_grads(params: AutoencoderParams, x: np.ndarray):
    """Mean squared error over all elements of the (already standardized) batch,
    with gradients for every layer keyed as in ``AutoencoderParams.as_dict``."""
    layers = params.encoder + params.decoder
    acts = params.activations()
    outs = _forward(layers, acts, x)
    diff = outs[-1] - x
    loss = float(np.mean(diff**2))
    delta = 2.0 * diff / diff.size
    grads = {}
    names = [f"enc{i}" for i in range(len(params.encoder))] + [f"dec{i}" for i in range(len(params.decoder))]
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        delta = delta * ACTIVATIONS[acts[k]][1](outs[k + 1])
        grads[f"{names[k]}.W"] = delta.T @ outs[k]
        grads[f"{names[k]}.b"] = delta.sum(axis=0)
        delta = delta @ W
    return loss, grads


def fit_standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale < 1e-8] = 1.0
    return mean, scale


@dataclass
class AutoencoderResult:
    params: AutoencoderParams
    loss_history: list[float] = field(default_factory=list)


def train_autoencoder(dataset, config: AutoencoderConfig) -> AutoencoderResult:
    """Mini-batch training on ``dataset`` (training split only).

    The returned loss history holds the full-dataset reconstruction MSE after each epoch.
    """
    config.validate()
    x = np.stack([_as_matrix(v)[0][0] for v in dataset]) if len(dataset) else np.empty((0, 0))
    if x.shape[0] == 0:
        raise ValueError("empty autoencoder training set")
    if x.shape[1] != config.input_dim:
        raise ValueError(f"vectors have length {x.shape[1]}, config expects {config.input_dim}")
    params = init_autoencoder(config)
    if config.standardize:
        params.mean, params.scale = fit_standardizer(x)
    xs = _standardized(params, x)
    rng = np.random.default_rng(config.seed + 1)
    opt = make_optimizer(config.optimizer)
    flat = params.as_dict()  # views into params' arrays; updated in place
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(xs))
        for start in range(0, len(xs), config.batch_size):
            batch = xs[order[start : start + config.batch_size]]
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked below
                loss, grads = reconstruction_loss_and_grads(params, batch)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, "autoencoder reconstruction loss is not finite")
            opt.step(flat, grads, config.learning_rate)
        with np.errstate(over="ignore", invalid="ignore"):
            loss, _ = reconstruction_loss_and_grads(params, xs)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, "autoencoder reconstruction loss is not finite")
        history.append(loss)
        log.debug("autoencoder epoch %d loss %.6g", epoch, loss)
    return AutoencoderResult(params, history)


def reduce_dataset(params: AutoencoderParams, dataset) -> list[np.ndarray]:
    if len(dataset) == 0:
        return []
    return list(encode(params, np.stack([_as_matrix(v)[0][0] for v in dataset])))


def config_dict(config: AutoencoderConfig) -> dict:
    d = asdict(config)
    d["hidden_sizes"] = list(config.hidden_sizes)
    return d
