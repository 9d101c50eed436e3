"""Audio loading, dataset manifests, label cleanup and stratified splits."""

from __future__ import annotations

import json
import logging
import math
import os
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

AUDIO_SUFFIXES = (".wav",)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class AudioFormatError(ValueError):
    """The file is not a WAV container this loader understands."""


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    id: str
    samples: np.ndarray
    sample_rate: int
    label: str = ""

    def __post_init__(self):
        if self.samples.size == 0:
            raise AudioFormatError(f"{self.id}: no samples")
        if self.sample_rate <= 0:
            raise AudioFormatError(f"{self.id}: sample rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, order=True)
class ManifestEntry:
    label: str
    path: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    class_counts: dict[str, int]
    skipped: int = field(default=0, compare=False)

    @classmethod
    def from_entries(cls, entries: Iterable[ManifestEntry], skipped: int = 0) -> "DatasetManifest":
        entries = tuple(sorted(entries))
        counts = Counter(e.label for e in entries)
        return cls(entries, dict(sorted(counts.items())), skipped)

    def to_json(self) -> dict:
        return {
            "entries": [{"path": e.path, "label": e.label} for e in self.entries],
            "class_counts": dict(self.class_counts),
            "skipped": self.skipped,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetManifest":
        manifest = cls.from_entries(
            (ManifestEntry(e["label"], e["path"]) for e in doc["entries"]), doc.get("skipped", 0)
        )
        if doc.get("class_counts") not in (None, manifest.class_counts):
            raise DatasetError("class_counts do not match entries")
        return manifest

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[ManifestEntry, ...]
    val: tuple[ManifestEntry, ...]
    test: tuple[ManifestEntry, ...]
    seed: int
    ratios: tuple[float, float, float]

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def parts(self) -> dict[str, tuple[ManifestEntry, ...]]:
        return {"train": self.train, "val": self.val, "test": self.test}

    def to_json(self) -> dict:
        doc: dict = {"seed": self.seed, "ratios": list(self.ratios)}
        for name, part in self.parts().items():
            doc[name] = [{"path": e.path, "label": e.label} for e in part]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SplitAssignment":
        def part(name):
            return tuple(ManifestEntry(e["label"], e["path"]) for e in doc[name])

        return cls(part("train"), part("val"), part("test"), int(doc["seed"]), tuple(doc["ratios"]))

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SplitAssignment":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# WAV decoding


def _read_chunks(blob: bytes, path) -> dict[bytes, bytes]:
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")
    chunks: dict[bytes, bytes] = {}
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack("<I", blob[pos + 4 : pos + 8])
        body = blob[pos + 8 : pos + 8 + size]
        if len(body) < size:
            if cid == b"data":
                raise AudioFormatError(f"{path}: truncated data chunk ({len(body)} of {size} bytes)")
            break
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)
    return chunks


def decode_wav(blob: bytes, path="<bytes>") -> tuple[np.ndarray, int]:
    """Decode PCM WAV bytes into mono float samples and the sample rate."""
    chunks = _read_chunks(blob, path)
    if b"fmt " not in chunks:
        raise AudioFormatError(f"{path}: missing fmt chunk")
    if b"data" not in chunks:
        raise AudioFormatError(f"{path}: missing data chunk")
    fmt = chunks[b"fmt "]
    code, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if code == WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        (code,) = struct.unpack("<H", fmt[24:26])
    if code != WAVE_FORMAT_PCM:
        raise AudioFormatError(f"{path}: unsupported format code {code:#06x} (only PCM 0x0001)")
    if bits not in (8, 16):
        raise AudioFormatError(f"{path}: unsupported bit depth {bits} (format code {code:#06x})")
    if channels not in (1, 2):
        raise AudioFormatError(f"{path}: unsupported channel count {channels}")
    data = chunks[b"data"]
    width = bits // 8 * channels
    if len(data) % width:
        raise AudioFormatError(f"{path}: truncated data chunk ({len(data)} bytes, frame size {width})")
    if bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    else:
        x = (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    x = x.reshape(-1, channels).mean(axis=1)
    return x, int(rate)


def load_wav(path: str | os.PathLike, label: str = "") -> AudioClip:
    path = Path(path)
    samples, rate = decode_wav(path.read_bytes(), path)
    return AudioClip(id=str(path), samples=samples, sample_rate=rate, label=label)


def encode_wav16(samples: Sequence[float], sample_rate: int) -> bytes:
    """Mono 16-bit PCM encoder (the inverse of the 1/32768 scaling, clipped)."""
    q = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767).astype("<i2")
    data = q.tobytes()
    fmt = struct.pack("<HHIIHH", WAVE_FORMAT_PCM, 1, sample_rate, sample_rate * 2, 2, 16)
    return (
        b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(data)) + b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", len(data)) + data
    )


def write_wav16(path: str | os.PathLike, samples: Sequence[float], sample_rate: int) -> None:
    Path(path).write_bytes(encode_wav16(samples, sample_rate))


# ---------------------------------------------------------------------------
# Manifests


def build_manifest(root: str | os.PathLike) -> DatasetManifest:
    """One entry per audio file found under ``root/<label>/``.

    Files without an audio suffix are skipped and counted in ``manifest.skipped``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    label_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not label_dirs:
        raise DatasetError(f"{root}: no labeled subdirectories")
    entries = []
    skipped = 0
    for d in label_dirs:
        try:
            files = sorted(p for p in d.rglob("*") if p.is_file())
        except OSError as exc:
            raise DatasetError(f"{d}: unreadable ({exc})") from exc
        for f in files:
            if f.suffix.lower() in AUDIO_SUFFIXES:
                entries.append(ManifestEntry(d.name, str(f)))
            else:
                skipped += 1
    if skipped:
        log.warning("skipped %d non-audio files under %s", skipped, root)
    return DatasetManifest.from_entries(entries, skipped)


def filter_min_samples(manifest: DatasetManifest, threshold: int = 4) -> DatasetManifest:
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    keep = {c for c, n in manifest.class_counts.items() if n >= threshold}
    if not keep:
        raise DatasetError(f"empty after filtering (no class has >= {threshold} samples)")
    return DatasetManifest.from_entries((e for e in manifest.entries if e.label in keep), manifest.skipped)


_WS = re.compile(r"\s+")


def normalize_label(label: str) -> str:
    return _WS.sub("_", label.strip()).lower()


def normalize_labels(manifest: DatasetManifest) -> DatasetManifest:
    return DatasetManifest.from_entries(
        (ManifestEntry(normalize_label(e.label), e.path) for e in manifest.entries), manifest.skipped
    )


def split_dataset(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1),
    seed: int = 0,
) -> SplitAssignment:
    """Stratified train/val/test split.

    Per class of size n: val gets floor(ratios[1]*n), test floor(ratios[2]*n)
    and train the remainder, after a seeded shuffle of that class.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    if not manifest.entries:
        raise DatasetError("manifest is empty")
    by_class: dict[str, list[ManifestEntry]] = {}
    for e in manifest.entries:
        by_class.setdefault(e.label, []).append(e)

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    too_small = []
    for label in sorted(by_class):
        items = by_class[label]
        n = len(items)
        # tiny epsilon keeps e.g. 0.2*35 from flooring to 6 via representation error
        n_val = math.floor(ratios[1] * n + 1e-9)
        n_test = math.floor(ratios[2] * n + 1e-9)
        if n - n_val - n_test < 1:
            too_small.append(f"{label} ({n})")
            continue
        order = rng.permutation(n)
        shuffled = [items[i] for i in order]
        val += shuffled[:n_val]
        test += shuffled[n_val : n_val + n_test]
        train += shuffled[n_val + n_test :]
    if too_small:
        raise DatasetError("classes too small to leave a training example: " + ", ".join(too_small))
    return SplitAssignment(tuple(train), tuple(val), tuple(test), int(seed), ratios)
