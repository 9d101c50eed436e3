"""Shared loading for the experiment scripts: directory -> labeled splits."""

from __future__ import annotations

from mdrr.audio_ingest import build_manifest, filter_min_samples, load_wav, normalize_labels, split_dataset
from mdrr.evaluation import LabeledSplits
from mdrr.mfcc import MfccConfig, extract_mfcc


def load_features(root, min_samples=4, config=MfccConfig()):
    manifest = filter_min_samples(normalize_labels(build_manifest(root)), min_samples)
    feats = {e.path: extract_mfcc(load_wav(e.path), config) for e in manifest.entries}
    return manifest, feats


def labeled_splits(manifest, feats, seed, ratios=(0.7, 0.2, 0.1)) -> LabeledSplits:
    assign = split_dataset(manifest, ratios, seed)
    return LabeledSplits(*(([feats[e.path] for e in part], [e.label for e in part]) for part in assign.parts().values()))
