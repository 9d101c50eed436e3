"""Learned clip representations, class means and agglomerative clustering.

The representation of a clip is the attention context vector of the trained
classifier. Dendrograms follow the scipy-style node numbering: leaves are
``0..n-1`` and the k-th merge creates node ``n + k``.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import BiLstmAttentionModel

LINKAGES = ("average", "single", "complete")


@dataclass
class EmbeddingSet:
    ids: list[str]
    labels: list[str]
    vectors: np.ndarray  # n x 2H

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64).reshape(len(self.ids), -1)
        if len(self.labels) != len(self.ids):
            raise ValueError("ids and labels differ in length")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embeddings must be finite")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    distance: float
    size: int


@dataclass
class Dendrogram:
    leaves: list[str]
    merges: list[Merge]

    @property
    def root(self) -> int:
        return len(self.leaves) + len(self.merges) - 1

    def node(self, idx: int) -> dict:
        n = len(self.leaves)
        if idx < n:
            return {"label": self.leaves[idx]}
        m = self.merges[idx - n]
        return {"children": [self.node(m.left), self.node(m.right)], "distance": m.distance, "merge": idx - n}

    def to_json(self) -> dict:
        return self.node(self.root)

    def to_newick(self) -> str:
        """Newick with branch lengths; a merge at distance d sits at height d/2."""
        n = len(self.leaves)

        def height(i):
            return 0.0 if i < n else self.merges[i - n].distance / 2.0

        def render(i):
            if i < n:
                return _newick_label(self.leaves[i])
            m = self.merges[i - n]
            h = height(i)
            return f"({render(m.left)}:{h - height(m.left)!r},{render(m.right)}:{h - height(m.right)!r})"

        return render(self.root) + ";"


_NEWICK_SPECIAL = re.compile(r"[\s(),:;\[\]']")


def _newick_label(label: str) -> str:
    if _NEWICK_SPECIAL.search(label):
        return "'" + label.replace("'", "''") + "'"
    return label


def dendrogram_from_json(doc: dict) -> Dendrogram:
    """Inverse of ``Dendrogram.to_json``: leaves in first-visit order, merges by their index."""
    leaves: list[str] = []
    internal: list[tuple[int, dict, list[int]]] = []

    def walk(node) -> tuple[str, object]:
        if "label" in node:
            leaves.append(node["label"])
            return ("leaf", len(leaves) - 1)
        kids = [walk(c) for c in node["children"]]
        internal.append((node["merge"], node, kids))
        return ("merge", node["merge"])

    walk(doc)
    n = len(leaves)
    merges: list[Merge | None] = [None] * len(internal)
    sizes: dict[int, int] = {i: 1 for i in range(n)}

    def ref(k):
        return k[1] if k[0] == "leaf" else n + k[1]

    for idx, node, kids in sorted(internal, key=lambda x: x[0]):
        a, b = ref(kids[0]), ref(kids[1])
        sizes[n + idx] = sizes[a] + sizes[b]
        merges[idx] = Merge(a, b, float(node["distance"]), sizes[n + idx])
    return Dendrogram(leaves, merges)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------


def extract_embeddings(model: BiLstmAttentionModel, X: np.ndarray, ids: Sequence[str], labels: Sequence[str]) -> EmbeddingSet:
    """Attention context vectors for prepared inputs ``X`` (n, T, F)."""
    if not model.trained:
        raise ValueError("model is untrained; embeddings need a trained classifier")
    if len(X) == 0:
        return EmbeddingSet([], [], np.empty((0, 2 * model.hidden)))
    _, context, _ = model.forward(np.asarray(X))
    return EmbeddingSet(list(ids), list(labels), np.atleast_2d(context))


def class_means(emb: EmbeddingSet) -> list[tuple[str, np.ndarray]]:
    if len(emb) == 0:
        raise ValueError("no embeddings")
    labels = np.asarray(emb.labels)
    return [(lab, emb.vectors[labels == lab].mean(axis=0)) for lab in sorted(set(emb.labels))]


def agglomerative(labels: Sequence[str], points: np.ndarray, linkage: str = "average") -> Dendrogram:
    """Bottom-up clustering with Euclidean point distances.

    Each step merges the closest pair of active clusters; among equal distances
    the pair whose (smaller, larger) minimum leaf labels sort first wins.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    pts = np.asarray(points, dtype=np.float64)
    n = len(labels)
    if n < 2:
        raise ValueError("need at least 2 points to cluster")
    if len(set(labels)) != n:
        raise ValueError("leaf labels must be unique")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    size = np.ones(n, dtype=np.int64)
    key = list(labels)  # smallest leaf label in each slot's cluster
    node = list(range(n))  # dendrogram node id held by each slot
    active = np.ones(n, dtype=bool)
    merges = []
    for step in range(n - 1):
        d = np.where(active[:, None] & active[None, :], dist, np.inf)
        best = d.min()
        ii, jj = np.nonzero(np.triu(d == best, 1))
        cand = sorted((tuple(sorted((key[i], key[j]))), i, j) for i, j in zip(ii, jj))
        _, i, j = cand[0]
        if key[j] < key[i]:
            i, j = j, i
        merges.append(Merge(node[i], node[j], float(best), int(size[i] + size[j])))
        if linkage == "average":
            row = (size[i] * dist[i] + size[j] * dist[j]) / (size[i] + size[j])
        elif linkage == "single":
            row = np.minimum(dist[i], dist[j])
        else:
            row = np.maximum(dist[i], dist[j])
        dist[i, :] = row
        dist[:, i] = row
        dist[i, i] = np.inf
        active[j] = False
        size[i] += size[j]
        key[i] = min(key[i], key[j])
        node[i] = n + step
    return Dendrogram(list(labels), merges)


# ---------------------------------------------------------------------------
# Export


def export_embeddings(emb: EmbeddingSet, path: str | os.PathLike) -> Path:
    if len(emb) == 0:
        raise ValueError("no embeddings to export")
    path = Path(path)
    width = emb.vectors.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", *(f"e{k}" for k in range(width))])
        for i, lab, v in zip(emb.ids, emb.labels, emb.vectors):
            w.writerow([i, lab, *(repr(float(x)) for x in v)])
    return path


def read_embeddings(path: str | os.PathLike) -> EmbeddingSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    return EmbeddingSet([r[0] for r in body], [r[1] for r in body],
                        np.array([[float(x) for x in r[2:]] for r in body]))


def export_dendrogram(tree: Dendrogram, path: str | os.PathLike) -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>.nwk`` next to ``path``."""
    path = Path(path)
    json_path = path.with_suffix(".json")
    nwk_path = path.with_suffix(".nwk")
    json_path.write_text(json.dumps(tree.to_json(), indent=2))
    nwk_path.write_text(tree.to_newick() + "\n")
    return json_path, nwk_path
