"""MFCC front end: pre-emphasis, framing, Hann window, radix-2 FFT power
spectrum, mel filterbank, log compression and orthonormal DCT-II.

Feature matrices are stored coefficient-major: ``values[d, t]`` is coefficient
``d`` of frame ``t`` (D rows, N columns).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import containers
from .audio_ingest import AudioClip


@dataclass(frozen=True)
class MfccConfig:
    """Front-end parameters. ``None`` lengths resolve against the sample rate
    (25 ms frames, 10 ms hop, fft_size the next power of two, fmax = Nyquist)."""

    frame_length: int | None = None
    hop_length: int | None = None
    fft_size: int | None = None
    mel_bands: int = 40
    coefficients: int = 20
    fmin: float = 0.0
    fmax: float | None = None
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10

    def resolve(self, sample_rate: int) -> "MfccConfig":
        frame = self.frame_length or int(round(0.025 * sample_rate))
        hop = self.hop_length or int(round(0.010 * sample_rate))
        fft = self.fft_size or 1 << max(frame - 1, 0).bit_length()
        fmax = self.fmax if self.fmax is not None else sample_rate / 2
        cfg = replace(self, frame_length=frame, hop_length=hop, fft_size=fft, fmax=float(fmax))
        cfg.validate(sample_rate)
        return cfg

    def validate(self, sample_rate: int | None = None) -> None:
        if not 0 < self.coefficients <= self.mel_bands:
            raise ValueError(f"need 0 < coefficients <= mel_bands, got {self.coefficients}, {self.mel_bands}")
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise ValueError("pre_emphasis must lie in [0, 1)")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        for name in ("frame_length", "hop_length"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fft_size is not None:
            if self.fft_size & (self.fft_size - 1) or self.fft_size < 1:
                raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
            if self.frame_length is not None and self.fft_size < self.frame_length:
                raise ValueError("fft_size must be >= frame_length")
        if sample_rate is not None:
            fmax = self.fmax if self.fmax is not None else sample_rate / 2
            if not self.fmin < fmax <= sample_rate / 2:
                raise ValueError(f"need fmin < fmax <= {sample_rate / 2}, got {self.fmin}, {fmax}")


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # D x N

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise ValueError(f"feature matrix must be D x N with N >= 1, got {self.values.shape}")

    @property
    def D(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# Transforms


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative decimation-in-time radix-2 FFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    batch = x.shape[:-1]
    a = x[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(*batch, n // size, size)
        even = a[..., :half]
        odd = a[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(*batch, n)


def hann(length: int) -> np.ndarray:
    if length == 1:
        return np.ones(1)
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / (length - 1))


def power_spectrum(frame: np.ndarray, fft_size: int) -> np.ndarray:
    """One-sided |DFT|^2 of the Hann-windowed, zero-padded frame(s).

    Accepts a single frame or a (frames, length) stack.
    """
    frame = np.asarray(frame, dtype=np.float64)
    length = frame.shape[-1]
    if length > fft_size:
        raise ValueError(f"frame length {length} exceeds fft_size {fft_size}")
    padded = np.zeros(frame.shape[:-1] + (fft_size,))
    padded[..., :length] = frame * hann(length)
    spec = fft(padded)[..., : fft_size // 2 + 1]
    return spec.real**2 + spec.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: MfccConfig, sample_rate: int) -> np.ndarray:
    cfg = config.resolve(sample_rate)
    return _filterbank(cfg.mel_bands, cfg.fft_size, sample_rate, cfg.fmin, cfg.fmax).copy()


@lru_cache(maxsize=32)
def _filterbank(bands: int, fft_size: int, sample_rate: int, fmin: float, fmax: float) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), bands + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - left) / (center - left)
    falling = (right - freqs) / (right - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.max(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"{bands} mel bands too many for fft_size {fft_size} at {sample_rate} Hz: "
            f"filters {empty.tolist()} contain no FFT bin"
        )
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are output coefficients."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def dct_ii(log_mel: np.ndarray, D: int | None = None) -> np.ndarray:
    """Orthonormal DCT-II along the last axis, keeping the first ``D`` outputs."""
    log_mel = np.asarray(log_mel, dtype=np.float64)
    K = log_mel.shape[-1]
    D = K if D is None else D
    if D > K:
        raise ValueError(f"D={D} exceeds input length {K}")
    return log_mel @ dct_matrix(K)[:D].T


def idct_ii(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    return coeffs @ dct_matrix(coeffs.shape[-1])


# ---------------------------------------------------------------------------
# Pipeline


def n_frames(length: int, frame_length: int, hop_length: int) -> int:
    return math.ceil(max(length - frame_length, 0) / hop_length + 1)


def frame_signal(clip: AudioClip, config: MfccConfig) -> np.ndarray:
    """Pre-emphasise and cut into (N, frame_length) frames; the tail frame is zero-padded."""
    cfg = config.resolve(clip.sample_rate)
    x = np.asarray(clip.samples, dtype=np.float64)
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - cfg.pre_emphasis * x[:-1]
    L, hop = cfg.frame_length, cfg.hop_length
    N = n_frames(y.size, L, hop)
    padded = np.zeros((N - 1) * hop + L)
    padded[: y.size] = y
    idx = np.arange(N)[:, None] * hop + np.arange(L)[None, :]
    return padded[idx]


def extract_mfcc(clip: AudioClip, config: MfccConfig = MfccConfig()) -> FeatureMatrix:
    cfg = config.resolve(clip.sample_rate)
    frames = frame_signal(clip, cfg)
    spec = power_spectrum(frames, cfg.fft_size)
    fb = _filterbank(cfg.mel_bands, cfg.fft_size, clip.sample_rate, cfg.fmin, cfg.fmax)
    energies = spec @ fb.T
    log_mel = np.log(np.maximum(energies, cfg.log_floor))
    coeffs = dct_ii(log_mel, cfg.coefficients)  # N x D
    return FeatureMatrix(np.ascontiguousarray(coeffs.T))


# ---------------------------------------------------------------------------
# Persistence


def save_csv(fm: FeatureMatrix, path: str | os.PathLike, config: MfccConfig | None = None) -> None:
    """One row per coefficient, one column per frame; config goes to ``<path>.json``."""
    path = Path(path)
    lines = [",".join(repr(float(v)) for v in row) for row in fm.values]
    path.write_text("\n".join(lines) + "\n")
    sidecar = {"D": fm.D, "N": fm.N, "config": asdict(config) if config else None}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))


def load_csv(path: str | os.PathLike) -> FeatureMatrix:
    rows = [line.split(",") for line in Path(path).read_text().splitlines() if line]
    return FeatureMatrix(np.array([[float(v) for v in r] for r in rows], dtype=np.float64))


def save_binary(fm: FeatureMatrix, path: str | os.PathLike, meta: dict | None = None) -> None:
    containers.save(path, {"mfcc": fm.values}, meta or {})


def load_binary(path: str | os.PathLike) -> tuple[FeatureMatrix, dict]:
    arrays, meta = containers.load(path)
    return FeatureMatrix(arrays["mfcc"]), meta
