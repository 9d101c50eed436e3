"""Small numpy neural toolkit with hand-written reverse-mode gradients.

All sequence tensors are batch-first: ``X`` has shape (B, T, F). LSTM gate
blocks are stacked in the order input, forget, output, candidate, so a
weight ``Wx`` has shape (4H, F) and rows ``[k*H:(k+1)*H]`` belong to gate k.

Model parameters live in one flat ``dict[str, ndarray]`` keyed
``fwd.Wx, fwd.Wh, fwd.b, bwd.*, att.W, att.b, out.W, out.b`` so optimizers,
finite-difference checks and serialization treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GATES = ("input", "forget", "output", "candidate")

Params = dict[str, np.ndarray]


class NonFiniteError(FloatingPointError):
    pass


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}" + (f": {detail}" if detail else ""))


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


# ---------------------------------------------------------------------------
# Dense


@dataclass
class DenseParams:
    W: np.ndarray  # out x in
    b: np.ndarray  # out


def dense_forward(W, b, x):
    return x @ W.T + b


def dense_backward(W, x, dy):
    """Gradients summed over the leading batch axis."""
    return dy.T @ x, dy.sum(axis=0), dy @ W


# ---------------------------------------------------------------------------
# LSTM


@dataclass
class LstmCellParams:
    Wx: np.ndarray  # 4H x F
    Wh: np.ndarray  # 4H x H
    b: np.ndarray  # 4H

    def __post_init__(self):
        H4, F = self.Wx.shape
        if H4 % 4 or self.Wh.shape != (H4, H4 // 4) or self.b.shape != (H4,):
            raise ValueError(f"inconsistent LSTM shapes {self.Wx.shape}, {self.Wh.shape}, {self.b.shape}")

    @property
    def H(self) -> int:
        return self.Wh.shape[1]

    @property
    def F(self) -> int:
        return self.Wx.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = GATES.index(name)
        s = slice(k * self.H, (k + 1) * self.H)
        return self.Wx[s], self.Wh[s], self.b[s]

    @classmethod
    def init(cls, rng: np.random.Generator, F: int, H: int) -> "LstmCellParams":
        Wx = np.concatenate([glorot_uniform(rng, H, F) for _ in GATES])
        Wh = np.concatenate([glorot_uniform(rng, H, H) for _ in GATES])
        return cls(Wx, Wh, np.zeros(4 * H))


@dataclass
class BiLstmParams:
    forward: LstmCellParams
    backward: LstmCellParams

    def __post_init__(self):
        if (self.forward.H, self.forward.F) != (self.backward.H, self.backward.F):
            raise ValueError("forward and backward LSTMs must share H and F")


@dataclass
class AttentionParams:
    W: np.ndarray  # 1 x 2H
    b: np.ndarray  # (1,)


def lstm_step(p: LstmCellParams, x_t, h_prev, c_prev):
    H = p.H
    z = x_t @ p.Wx.T + h_prev @ p.Wh.T + p.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H : 2 * H])
    o = sigmoid(z[..., 2 * H : 3 * H])
    g = np.tanh(z[..., 3 * H :])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def lstm_forward(p: LstmCellParams, X: np.ndarray, reverse: bool = False):
    """Run over (B, T, F) from zero state; returns hidden states (B, T, H) and a cache.

    With ``reverse`` the recurrence starts at t = T-1, and output index t still
    refers to input position t.
    """
    B, T, _ = X.shape
    H = p.H
    proj = X @ p.Wx.T + p.b
    gates = np.empty((B, T, 4 * H))
    cs = np.empty((B, T, H))
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        z = proj[:, t] + h @ p.Wh.T
        act = gates[:, t]
        act[:, : 3 * H] = sigmoid(z[:, : 3 * H])
        act[:, 3 * H :] = np.tanh(z[:, 3 * H :])
        c = act[:, H : 2 * H] * c + act[:, :H] * act[:, 3 * H :]
        h = act[:, 2 * H : 3 * H] * np.tanh(c)
        cs[:, t] = c
        hs[:, t] = h
    return hs, (X, gates, cs, hs, reverse)


def lstm_backward(p: LstmCellParams, dHs: np.ndarray, cache):
    """Backpropagation through time. Returns (dWx, dWh, db, dX)."""
    X, gates, cs, hs, reverse = cache
    B, T, F = X.shape
    H = p.H
    dz_all = np.empty((B, T, 4 * H))
    dWh = np.zeros_like(p.Wh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        prev = t + 1 if reverse else t - 1
        if 0 <= prev < T:
            h_prev, c_prev = hs[:, prev], cs[:, prev]
        else:
            h_prev = c_prev = np.zeros((B, H))
        act = gates[:, t]
        i, f, o, g = act[:, :H], act[:, H : 2 * H], act[:, 2 * H : 3 * H], act[:, 3 * H :]
        tc = np.tanh(cs[:, t])
        dh = dHs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc**2)
        dz = dz_all[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H :] = dc * i * (1.0 - g**2)
        dc_next = dc * f
        dWh += dz.T @ h_prev
        dh_next = dz @ p.Wh
    flat = dz_all.reshape(B * T, 4 * H)
    dWx = flat.T @ X.reshape(B * T, F)
    db = flat.sum(axis=0)
    dX = dz_all @ p.Wx
    return dWx, dWh, db, dX


def bilstm_forward(p: BiLstmParams, X: np.ndarray):
    """Concatenate forward and backward hidden states: (B, T, 2H)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        hs, _ = bilstm_forward(p, X[None])
        return hs[0], None
    if X.shape[1] < 1:
        raise ValueError("empty sequence")
    hf, cf = lstm_forward(p.forward, X)
    hb, cb = lstm_forward(p.backward, X, reverse=True)
    return np.concatenate([hf, hb], axis=-1), (cf, cb)


# ---------------------------------------------------------------------------
# Attention


def attention_forward(p: AttentionParams, Hs: np.ndarray):
    """Scalar-score attention pooling over time.

    ``e_t = tanh(W h_t + b)``, ``alpha = softmax(e)``, ``c = sum_t alpha_t h_t``.
    Works on (T, 2H) or (B, T, 2H); returns (c, alpha, cache).
    """
    Hs = np.asarray(Hs, dtype=np.float64)
    if Hs.ndim == 2:
        c, alpha, _ = attention_forward(p, Hs[None])
        return c[0], alpha[0], None
    e = np.tanh(Hs @ p.W[0] + p.b[0])
    alpha = softmax(e, axis=1)
    c = np.einsum("bt,btk->bk", alpha, Hs)
    return c, alpha, (Hs, e, alpha)


def attention_backward(p: AttentionParams, dc: np.ndarray, cache):
    Hs, e, alpha = cache
    dalpha = np.einsum("btk,bk->bt", Hs, dc)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    ds = de * (1.0 - e**2)
    dW = np.einsum("bt,btk->k", ds, Hs)[None, :]
    db = np.array([ds.sum()])
    dHs = alpha[..., None] * dc[:, None, :] + ds[..., None] * p.W[0]
    return dW, db, dHs


# ---------------------------------------------------------------------------
# Loss


def softmax_cross_entropy(logits: np.ndarray, label):
    """Per-example ``-log softmax(logits)[label]`` and the probabilities.

    Accepts a single logit vector with an int label, or (B, C) with (B,) labels.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    y = np.atleast_1d(np.asarray(label))
    C = z.shape[1]
    if np.any((y < 0) | (y >= C)):
        raise ValueError(f"label out of range for {C} classes: {label}")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - log_norm[:, None]
    loss = -logp[np.arange(len(y)), y]
    probs = np.exp(logp)
    if single:
        return float(loss[0]), probs[0]
    return loss, probs


# ---------------------------------------------------------------------------
# Full classifier: Bi-LSTM -> attention -> dense -> softmax


def init_model(n_features: int, hidden: int, n_classes: int, seed: int = 0) -> Params:
    rng = np.random.default_rng(seed)
    fwd = LstmCellParams.init(rng, n_features, hidden)
    bwd = LstmCellParams.init(rng, n_features, hidden)
    return {
        "fwd.Wx": fwd.Wx, "fwd.Wh": fwd.Wh, "fwd.b": fwd.b,
        "bwd.Wx": bwd.Wx, "bwd.Wh": bwd.Wh, "bwd.b": bwd.b,
        "att.W": glorot_uniform(rng, 1, 2 * hidden), "att.b": np.zeros(1),
        "out.W": glorot_uniform(rng, n_classes, 2 * hidden), "out.b": np.zeros(n_classes),
    }


def _views(params: Params):
    bi = BiLstmParams(
        LstmCellParams(params["fwd.Wx"], params["fwd.Wh"], params["fwd.b"]),
        LstmCellParams(params["bwd.Wx"], params["bwd.Wh"], params["bwd.b"]),
    )
    return bi, AttentionParams(params["att.W"], params["att.b"])


def model_forward(params: Params, X: np.ndarray):
    """Returns (logits (B, C), context (B, 2H), alpha (B, T), cache)."""
    bi, att = _views(params)
    Hs, bcache = bilstm_forward(bi, X)
    c, alpha, acache = attention_forward(att, Hs)
    logits = dense_forward(params["out.W"], params["out.b"], c)
    return logits, c, alpha, (bcache, acache, c)


def model_loss_and_grads(params: Params, X: np.ndarray, y: np.ndarray):
    """Summed cross-entropy over the batch and its exact gradient for every parameter."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    logits, _, _, (bcache, acache, c) = model_forward(params, X)
    losses, probs = softmax_cross_entropy(logits, y)
    dlogits = probs.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    bi, att = _views(params)
    grads: Params = {}
    grads["out.W"], grads["out.b"], dc = dense_backward(params["out.W"], c, dlogits)
    grads["att.W"], grads["att.b"], dHs = attention_backward(att, dc, acache)
    H = bi.forward.H
    for name, cell, cache, dh in (
        ("fwd", bi.forward, bcache[0], dHs[..., :H]),
        ("bwd", bi.backward, bcache[1], dHs[..., H:]),
    ):
        grads[f"{name}.Wx"], grads[f"{name}.Wh"], grads[f"{name}.b"], _ = lstm_backward(cell, dh, cache)
    return float(losses.sum()), grads, probs


# ---------------------------------------------------------------------------
# Optimizers


def _check_finite(grads: Params) -> None:
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {k}")


@dataclass
class SGD:
    """Plain gradient descent: ``w <- w - lr * g``."""

    def step(self, params: Params, grads: Params, lr: float) -> Params:
        _check_finite(grads)
        for k, g in grads.items():
            params[k] -= lr * g
        return params


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    def step(self, params: Params, grads: Params, lr: float) -> Params:
        _check_finite(grads)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def make_optimizer(name: str):
    if name == "sgd":
        return SGD()
    if name == "adam":
        return Adam()
    raise ValueError(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------------------
# Finite differences


def numerical_gradient(loss: Callable[[], float], params: Params, eps: float = 1e-5) -> Params:
    """Central differences of ``loss()`` w.r.t. every entry of ``params`` (perturbed in place)."""
    out = {}
    for k, p in params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss()
            flat[i] = orig - eps
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        out[k] = g
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> float:
    """``||a - n|| / max(||a|| + ||n||, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))
