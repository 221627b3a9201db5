"""k-means over L2-normalized embeddings, plus motif-label agreement.

Squared Euclidean distance on normalized vectors is monotone in cosine
distance, which is the metric the embeddings were trained under, so Lloyd
iterations effectively cluster by cosine similarity. Initialization is
k-means++ to tame seed sensitivity; the seed is still explicit and fully
determines the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .manifest import DatasetManifest, stratification_key
from .store import EmbeddingStore


@dataclass
class ClusterAssignment:
    k: int
    ids: list[str]
    labels: np.ndarray        # (n,) cluster index per id
    centroids: np.ndarray     # (k, dim)
    inertia: float            # sum of squared distances to assigned centroids
    n_iters: int
    inertia_history: list[float]  # inertia after each assignment step

    def assignment(self) -> dict[str, int]:
        return {image_id: int(label) for image_id, label in zip(self.ids, self.labels)}


def normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DataError("cannot L2-normalize a zero embedding")
    return x / norms


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clamp tiny negatives from cancellation.
    d = (np.sum(x * x, axis=1)[:, None] - 2.0 * (x @ centroids.T)
         + np.sum(centroids * centroids, axis=1)[None, :])
    return np.maximum(d, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    closest = _sq_dists(x, centroids[:1])[:, 0]
    for i in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # All points coincide with chosen centroids; any choice works.
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centroids[i] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centroids[i:i + 1])[:, 0])
    return centroids


def kmeans_points(x: np.ndarray, k: int, seed: int, max_iters: int = 100,
                  tol: float = 1e-8, normalize: bool = True,
                  ids: Sequence[str] | None = None) -> ClusterAssignment:
    """Lloyd iterations with k-means++ seeding over raw points."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k > n:
        raise DataError(f"k ({k}) exceeds number of points ({n})")
    if normalize:
        x = normalize_rows(x)
    if ids is None:
        ids = [str(i) for i in range(n)]
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    inertia = np.inf
    history: list[float] = []
    n_iters = 0
    for n_iters in range(1, max_iters + 1):
        d = _sq_dists(x, centroids)
        labels = np.argmin(d, axis=1)  # ties resolve to the lowest index
        inertia = float(d[np.arange(n), labels].sum())
        history.append(inertia)
        new_centroids = centroids.copy()
        empty: list[int] = []
        for c in range(k):
            members = labels == c
            if members.any():
                new_centroids[c] = x[members].mean(axis=0)
            else:
                empty.append(c)
        if empty:
            # Re-seed empty clusters from the farthest points, one each.
            far_order = np.argsort(-d[np.arange(n), labels], kind="stable")
            for rank, c in enumerate(empty):
                new_centroids[c] = x[far_order[rank % n]]
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    d = _sq_dists(x, centroids)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(n), labels].sum())
    history.append(inertia)
    return ClusterAssignment(k=k, ids=list(ids), labels=labels, centroids=centroids,
                             inertia=inertia, n_iters=n_iters,
                             inertia_history=history)


def kmeans(store: EmbeddingStore, ids: Sequence[str], k: int, seed: int,
           max_iters: int = 100, tol: float = 1e-8) -> ClusterAssignment:
    """Cluster the stored embeddings for ``ids`` (L2-normalized first)."""
    if not ids:
        raise DataError("no ids to cluster")
    x = store.matrix(ids)
    return kmeans_points(x, k, seed, max_iters=max_iters, tol=tol,
                         normalize=True, ids=ids)


def cluster_label_agreement(assignment: ClusterAssignment,
                            manifest: DatasetManifest,
                            ) -> tuple[np.ndarray, float]:
    """Contingency counts (k x n_classes, by lowest-index primary motif) and
    purity = sum of per-cluster max counts / total."""
    by_id = manifest.by_id()
    missing = [i for i in assignment.ids if i not in by_id]
    if missing:
        raise DataError(f"{len(missing)} clustered ids missing from manifest: "
                        + ", ".join(missing[:10]))
    table = np.zeros((assignment.k, manifest.n_classes), dtype=np.int64)
    for image_id, label in zip(assignment.ids, assignment.labels):
        table[label, stratification_key(by_id[image_id])] += 1
    purity = float(table.max(axis=1).sum()) / float(len(assignment.ids))
    return table, purity


def write_assignment(assignment: ClusterAssignment, path) -> None:
    lines = ["image_id\tcluster"]
    lines += [f"{image_id}\t{int(label)}"
              for image_id, label in zip(assignment.ids, assignment.labels)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_contingency(table: np.ndarray, purity: float,
                      motif_names: Sequence[str], path) -> None:
    lines = ["cluster\t" + "\t".join(motif_names)]
    for c in range(table.shape[0]):
        lines.append(str(c) + "\t" + "\t".join(str(int(v)) for v in table[c]))
    lines.append(f"# purity\t{format(purity, '.17g')}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
