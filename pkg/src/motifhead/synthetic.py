"""Synthetic annotated dataset generator for tests and benchmarks.

Each class gets a fixed unit-norm anchor direction (standard basis vector
e_c, which is why the embedding dim must be at least the class count).
Samples are the anchor plus isotropic Gaussian noise. A record carrying a
secondary motif s blends the second anchor in at amplitude
SECONDARY_BLEND * noise, so the secondary signal scales with the noise
floor and the noise=0 case degenerates to every sample sitting exactly on
its primary anchor. That keeps the zero-noise dataset perfectly separable
on primary motifs: blended records then coincide with plain ones, the
average training target for the secondary class stays near zero, and a
trained head never pushes its probability over the prediction threshold.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .manifest import AnnotationRecord, DatasetManifest, Tag

#: Secondary-anchor amplitude in units of the noise scale.
SECONDARY_BLEND = 3.0


def generate_synthetic(n_classes: int, dim: int, per_class: int,
                       sm_rate: float, rf_rate: float, can_rate: float,
                       noise: float, seed: int,
                       motif_names: list[str] | None = None,
                       ) -> tuple[DatasetManifest, dict[str, np.ndarray]]:
    """Build a manifest plus float32 embeddings, fully determined by seed.

    Rates are per-record Bernoulli probabilities: sm_rate for carrying one
    secondary motif, rf_rate / can_rate for the red-flag / canonical tags
    (mutually exclusive, remainder standard). Returns the manifest and an
    image_id -> float32 vector mapping (insertion order) ready for
    write_store.
    """
    if n_classes < 1 or per_class < 1 or dim < 1:
        raise ConfigError("n_classes, dim and per_class must all be >= 1")
    for name, rate in (("sm_rate", sm_rate), ("rf_rate", rf_rate), ("can_rate", can_rate)):
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"{name} must be in [0, 1], got {rate}")
    if rf_rate + can_rate > 1.0:
        raise ConfigError("rf_rate + can_rate must not exceed 1")
    if noise < 0.0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    if dim < n_classes:
        raise ConfigError(
            f"dim ({dim}) must be >= n_classes ({n_classes}): anchors are "
            "orthogonal basis directions")
    if motif_names is None:
        motif_names = [f"motif_{c:02d}" for c in range(n_classes)]
    elif len(motif_names) != n_classes:
        raise ConfigError("motif_names length must equal n_classes")

    rng = np.random.default_rng(seed)
    records: list[AnnotationRecord] = []
    embeddings: dict[str, np.ndarray] = {}
    total = n_classes * per_class
    width = max(5, len(str(total - 1)))
    for i in range(total):
        c = i // per_class
        image_id = f"img_{i:0{width}d}"
        u = rng.random()
        if u < rf_rate:
            tag = Tag.RED_FLAG
        elif u < rf_rate + can_rate:
            tag = Tag.CANONICAL
        else:
            tag = Tag.STANDARD
        secondary: frozenset[int] = frozenset()
        vec = np.zeros(dim, dtype=np.float64)
        vec[c] = 1.0
        if n_classes > 1 and rng.random() < sm_rate:
            s = int(rng.integers(n_classes - 1))
            if s >= c:
                s += 1
            secondary = frozenset({s})
            vec[s] += SECONDARY_BLEND * noise
        vec += noise * rng.standard_normal(dim)
        records.append(AnnotationRecord(image_id, frozenset({c}), secondary, tag))
        embeddings[image_id] = vec.astype(np.float32)
    manifest = DatasetManifest(motif_names, records).validate()
    return manifest, embeddings
