"""``mdrr`` command line: ingest, extract, train, eval, sweep, cluster.

Exit codes: 0 success, 1 partial failure (some files failed to extract),
2 usage or validation error, 3 numerical failure (training diverged).
Log verbosity comes from ``MDRR_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as run_config
from .audio_ingest import (
    DatasetError,
    DatasetManifest,
    SplitAssignment,
    build_manifest,
    filter_min_samples,
    normalize_labels,
    split_dataset,
)
from .classifier import ModelVariant, Pipeline, fit_pipeline
from .cluster import EmbeddingSet, agglomerative, class_means, export_dendrogram, export_embeddings
from .evaluation import LabeledSplits, SweepSpec, evaluate_pipeline, run_sweep, sweep_csv
from .nn_core import DivergenceError
from .store import build_feature_store, load_split, sha256_bytes, sha256_file

log = logging.getLogger("mdrr")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _config(args) -> run_config.RunConfig:
    try:
        return run_config.resolve(args.config, args.set or (), seed=args.seed, out=args.out)
    except run_config.ConfigError as exc:
        raise UsageError(f"invalid config: {exc}") from None
    except TypeError as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _write_run_manifest(out: Path, command: str, cfg: run_config.RunConfig, inputs: dict[str, str]) -> None:
    doc = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "inputs": inputs,
        "config": cfg.to_dict(),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out / f"run_manifest.{command}.json").write_text(json.dumps(doc, indent=2))


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _index_path(args, out: Path) -> Path:
    return _require(Path(args.features) if args.features else out / "features" / "index.json", "feature index")


# ---------------------------------------------------------------------------
# Commands


def cmd_ingest(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    try:
        manifest = build_manifest(args.root)
        if cfg.ingest.normalize_labels:
            manifest = normalize_labels(manifest)
        manifest = filter_min_samples(manifest, cfg.ingest.min_samples)
        splits = split_dataset(manifest, cfg.ingest.ratios, cfg.seed)
    except (DatasetError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    manifest.save(out / "manifest.json")
    splits.save(out / "splits.json")
    _write_run_manifest(out, "ingest", cfg, {"manifest": sha256_bytes(json.dumps(manifest.to_json()).encode())})
    print(f"classes: {len(manifest.class_counts)}  clips: {len(manifest.entries)}  skipped non-audio: {manifest.skipped}")
    for label, n in manifest.class_counts.items():
        print(f"  {label}: {n}")
    tr, va, te = splits.sizes()
    print(f"split (seed {cfg.seed}): train {tr}  val {va}  test {te}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    splits_path = _require(Path(args.splits) if args.splits else out / "splits.json", "splits file")
    splits = SplitAssignment.load(splits_path)
    report = build_feature_store(splits, cfg.mfcc, out, jobs=args.jobs)
    _write_run_manifest(out, "extract", cfg, {"splits": sha256_file(splits_path)})
    print(f"extracted: {report.extracted}  skipped: {report.skipped}  failed: {len(report.failures)}")
    for f in report.failures:
        print(f"  FAILED {f['path']}: {f['error']}")
    print(f"index: {report.index_path}")
    return EXIT_PARTIAL if report.failures else EXIT_OK


def _load_splits(index: Path) -> LabeledSplits:
    parts = {s: load_split(index, s) for s in ("train", "val", "test")}
    for s, p in parts.items():
        if s != "test" and not p.features:
            raise UsageError(f"{s} split is empty in {index}")
    return LabeledSplits(*((p.features, p.labels) for p in parts.values()))


def cmd_train(args) -> int:
    try:
        variant = ModelVariant.parse(args.variant)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = _config(args)
    out = Path(cfg.out)
    index = _index_path(args, out)
    splits = _load_splits(index)
    try:
        fit = fit_pipeline(variant, *splits.train, *splits.val, cfg.pipeline())
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    run_dir = out / variant.value
    run_dir.mkdir(parents=True, exist_ok=True)
    ckpt = run_dir / "checkpoint.bin"
    fit.pipeline.save(ckpt)
    fit.log.save(run_dir / "training_log.csv")
    _write_run_manifest(run_dir, "train", cfg, {"features": sha256_file(index)})
    rep = evaluate_pipeline(fit.pipeline, *splits.val)
    print(f"variant {variant.value}: best epoch {fit.log.best_epoch} of {len(fit.log.records)}")
    print(f"validation precision {rep.macro_precision:.4f}  recall {rep.macro_recall:.4f}  accuracy {rep.accuracy:.4f}")
    print(f"checkpoint: {ckpt}  sha256 {sha256_file(ckpt)}")
    return EXIT_OK


def _load_checkpoint(path: str) -> Pipeline:
    p = _require(Path(path), "checkpoint")
    try:
        return Pipeline.load(p)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"unreadable checkpoint {p}: {exc}") from None


def cmd_eval(args) -> int:
    pipe = _load_checkpoint(args.checkpoint)
    cfg = _config(args)
    out = Path(cfg.out)
    split = args.split or cfg.eval.split
    data = load_split(_index_path(args, out), split)
    if not data.features:
        raise UsageError(f"split {split!r} is empty")
    try:
        rep = evaluate_pipeline(pipe, data.features, data.labels)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"metrics_{pipe.variant.value}_{split}.csv"
    csv_path.write_text(
        "variant,dataset,precision,recall,accuracy\n"
        f"{pipe.variant.value},{cfg.eval.dataset},{rep.macro_precision!r},{rep.macro_recall!r},{rep.accuracy!r}\n"
    )
    _write_run_manifest(out, "eval", cfg, {"checkpoint": sha256_file(args.checkpoint)})
    print(f"{pipe.variant.value} on {split}: precision {rep.macro_precision:.4f}  recall {rep.macro_recall:.4f}  accuracy {rep.accuracy:.4f}")
    print(f"metrics: {csv_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    spec_path = _require(Path(args.spec), "sweep spec")
    doc = json.loads(spec_path.read_text())
    try:
        spec = SweepSpec(
            doc["parameter"],
            [tuple(v) if isinstance(v, list) and doc["parameter"] == "input_shape" else v for v in doc["values"]],
            cfg.pipeline(),
            list(doc.get("seeds", [cfg.seed])),
        )
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid sweep spec: {exc}") from None
    splits = _load_splits(_index_path(args, out))
    try:
        rows, skipped = run_sweep(spec, splits, jobs=args.jobs)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"sweep_{spec.parameter}.csv"
    csv_path.write_text(sweep_csv(rows))
    _write_run_manifest(out, "sweep", cfg, {"spec": sha256_file(spec_path)})
    print(f"sweep {spec.parameter}: {len(rows)} rows, {len(skipped)} skipped")
    for s in skipped:
        print(f"  skipped {s}")
    print(f"results: {csv_path}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    pipe = _load_checkpoint(args.checkpoint)
    cfg = _config(args)
    out = Path(cfg.out)
    split = args.split or cfg.eval.split
    data = load_split(_index_path(args, out), split)
    if not data.features:
        raise UsageError(f"split {split!r} is empty")
    emb = EmbeddingSet(data.ids, data.labels, pipe.embeddings(data.features))
    if cfg.cluster.mode == "species":
        means = class_means(emb)
        names, points = [m[0] for m in means], np.stack([m[1] for m in means])
    else:
        names, points = emb.ids, emb.vectors
    if len(names) < 2:
        raise UsageError("need at least 2 leaves to cluster")
    tree = agglomerative(names, points, cfg.cluster.linkage)
    out.mkdir(parents=True, exist_ok=True)
    export_embeddings(emb, out / "embeddings.csv")
    json_path, nwk_path = export_dendrogram(tree, out / "dendrogram")
    _write_run_manifest(out, "cluster", cfg, {"checkpoint": sha256_file(args.checkpoint)})
    print(f"embeddings: {out / 'embeddings.csv'} ({len(emb)} rows)")
    print(f"dendrogram: {json_path}, {nwk_path} ({len(names)} leaves)")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE", help="override a config field")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="mdrr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="build manifest and splits from <root>/<label>/*.wav")
    s.add_argument("root")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("extract", parents=[common], help="compute MFCC features for every split entry")
    s.add_argument("--splits", help="splits.json (default: <out>/splits.json)")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", parents=[common], help="train one pipeline variant")
    s.add_argument("--variant", required=True, help="MD, MDR or MDRR")
    s.add_argument("--features", help="feature index (default: <out>/features/index.json)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="score a checkpoint on a split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=("train", "val", "test"))
    s.add_argument("--features")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common], help="one-parameter MDRR sweep")
    s.add_argument("--spec", required=True, help='JSON {"parameter": ..., "values": [...], "seeds": [...]}')
    s.add_argument("--features")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("cluster", parents=[common], help="export embeddings and a dendrogram")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=("train", "val", "test"))
    s.add_argument("--features")
    s.set_defaults(func=cmd_cluster)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MDRR_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
