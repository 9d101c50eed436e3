"""On-disk feature store: one binary MFCC file per clip plus ``index.json``.

Feature files are content-addressed by the source file's SHA-256 and the
MFCC config hash, so re-running extraction skips anything already current.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .audio_ingest import SplitAssignment, decode_wav
from .audio_ingest import AudioClip
from .mfcc import FeatureMatrix, MfccConfig, extract_mfcc, load_binary, save_binary

log = logging.getLogger(__name__)


def sha256_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def sha256_file(path: str | os.PathLike) -> str:
    return sha256_bytes(Path(path).read_bytes())


def mfcc_config_hash(cfg: MfccConfig) -> str:
    return sha256_bytes(json.dumps(asdict(cfg), sort_keys=True).encode())[:16]


@dataclass
class ExtractReport:
    index_path: Path
    extracted: int = 0
    skipped: int = 0
    failures: list[dict] = field(default_factory=list)


def _extract(job):
    path, cfg, cfg_hash, feat_dir = job
    try:
        blob = Path(path).read_bytes()
        src = sha256_bytes(blob)
        target = Path(feat_dir) / f"{sha256_bytes((src + cfg_hash).encode())[:24]}.bin"
        if target.exists():
            return path, src, target.name, "skipped", None
        samples, rate = decode_wav(blob, path)
        fm = extract_mfcc(AudioClip(str(path), samples, rate), cfg)
        save_binary(fm, target, {"source": str(path), "source_sha256": src, "mfcc_config_hash": cfg_hash})
        return path, src, target.name, "extracted", None
    except Exception as exc:  # noqa: BLE001 - per-file failures are reported, not fatal
        return path, None, None, "failed", f"{type(exc).__name__}: {exc}"


def build_feature_store(splits: SplitAssignment, cfg: MfccConfig, out_dir: str | os.PathLike, jobs: int = 1) -> ExtractReport:
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    cfg_hash = mfcc_config_hash(cfg)
    assigned = [(name, e) for name, part in splits.parts().items() for e in part]
    jobs_list = [(e.path, cfg, cfg_hash, str(feat_dir)) for _, e in assigned]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract, jobs_list, chunksize=8))
    else:
        results = [_extract(j) for j in jobs_list]

    report = ExtractReport(feat_dir / "index.json")
    entries = []
    for (split, e), (path, src, fname, status, err) in zip(assigned, results):
        if status == "failed":
            log.error("extract failed for %s: %s", path, err)
            report.failures.append({"path": path, "error": err})
            continue
        report.extracted += status == "extracted"
        report.skipped += status == "skipped"
        entries.append({"path": e.path, "label": e.label, "split": split, "source_sha256": src, "feature_file": fname})
    index = {
        "mfcc_config": asdict(cfg),
        "mfcc_config_hash": cfg_hash,
        "split_seed": splits.seed,
        "entries": entries,
        "failures": report.failures,
    }
    report.index_path.write_text(json.dumps(index, indent=2))
    return report


@dataclass
class SplitFeatures:
    ids: list[str]
    labels: list[str]
    features: list[FeatureMatrix]


def load_split(index_path: str | os.PathLike, split: str) -> SplitFeatures:
    index_path = Path(index_path)
    index = json.loads(index_path.read_text())
    ids, labels, feats = [], [], []
    for e in index["entries"]:
        if e["split"] != split:
            continue
        fm, _ = load_binary(index_path.parent / e["feature_file"])
        ids.append(e["path"])
        labels.append(e["label"])
        feats.append(fm)
    return SplitFeatures(ids, labels, feats)
