"""Synthetic "species": pure tones in white noise at a fixed SNR."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .audio_ingest import AudioClip, write_wav16

TONES = {"tone_440": 440.0, "tone_880": 880.0, "tone_1760": 1760.0}


def tone_clip(freq: float, rng: np.random.Generator, duration: float = 1.0, sample_rate: int = 16000,
              snr_db: float = 20.0, amplitude: float | None = None) -> np.ndarray:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    amp = rng.uniform(0.2, 0.6) if amplitude is None else amplitude
    signal = amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    noise_std = np.sqrt(np.mean(signal**2) / 10 ** (snr_db / 10))
    return np.clip(signal + rng.normal(0.0, noise_std, t.size), -1.0, 1.0)


def make_tone_corpus(n_per_class: int = 40, seed: int = 0, duration: float = 1.0, sample_rate: int = 16000,
                     snr_db: float = 20.0, tones: dict[str, float] = TONES) -> list[AudioClip]:
    rng = np.random.default_rng(seed)
    clips = []
    for label, freq in tones.items():
        for i in range(n_per_class):
            x = tone_clip(freq, rng, duration, sample_rate, snr_db)
            clips.append(AudioClip(f"{label}/{i:03d}", x, sample_rate, label))
    return clips


def write_tone_corpus(root: str | os.PathLike, **kwargs) -> Path:
    """Write ``make_tone_corpus`` as 16-bit WAVs under ``root/<label>/``."""
    root = Path(root)
    for clip in make_tone_corpus(**kwargs):
        path = root / f"{clip.id}.wav"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav16(path, clip.samples, clip.sample_rate)
    return root
