from __future__ import annotations

import numpy as np
import pytest

from motifhead.manifest import AnnotationRecord, DatasetManifest, Tag
from motifhead.store import open_embedding_store, write_store


def make_manifest(n_classes: int = 4, records=None) -> DatasetManifest:
    names = [f"m{i}" for i in range(n_classes)]
    if records is None:
        records = [AnnotationRecord(f"img_{i}", frozenset({i % n_classes}))
                   for i in range(2 * n_classes)]
    return DatasetManifest(names, list(records)).validate()


def make_store(tmp_path, dim: int, ids, seed: int = 0):
    rng = np.random.default_rng(seed)
    emb = {i: rng.standard_normal(dim).astype(np.float32) for i in ids}
    path = tmp_path / "store.mhed"
    write_store(path, dim, emb)
    return open_embedding_store(path), emb


@pytest.fixture
def tiny_dataset(tmp_path):
    """Manifest of 8 images over 4 motifs plus a matching store, dim 6."""
    records = [
        AnnotationRecord("a", frozenset({0}), frozenset({1}), Tag.CANONICAL),
        AnnotationRecord("b", frozenset({1})),
        AnnotationRecord("c", frozenset({2}), tag=Tag.RED_FLAG),
        AnnotationRecord("d", frozenset({3})),
        AnnotationRecord("e", frozenset({0, 2})),
        AnnotationRecord("f", frozenset({1}), frozenset({3})),
        AnnotationRecord("g", frozenset({2}), tag=Tag.CANONICAL),
        AnnotationRecord("h", frozenset({3}), tag=Tag.RED_FLAG),
    ]
    manifest = make_manifest(4, records)
    store, emb = make_store(tmp_path, 6, [r.image_id for r in records])
    yield manifest, store, emb
    store.close()
