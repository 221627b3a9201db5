"""Annotated-dataset model: motif vocabulary, per-image records, splits.

Manifest file format (UTF-8, line oriented, diff-friendly):

    # free-form comment
    @motifs hug,kiss,brawl
    img_0001|hug|brawl|canonical|train
    img_0002|kiss||standard|
    img_0003|hug,kiss|||test

One ``@motifs`` directive declares the ordered class vocabulary and must
precede all records. Each record line has five pipe-separated fields:
image id, comma-separated primary motif names (non-empty), comma-separated
secondary motif names (may be empty), representativeness tag (red_flag /
standard / canonical, empty means standard), and an optional split field
(train / test, empty means unassigned). Blank lines and '#' lines are
ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, DataError


class Tag(str, Enum):
    RED_FLAG = "red_flag"
    STANDARD = "standard"
    CANONICAL = "canonical"


#: Loss weight tier implied by each tag, low to high.
TAG_TIER = {Tag.RED_FLAG: 0, Tag.STANDARD: 1, Tag.CANONICAL: 2}


@dataclass(frozen=True)
class AnnotationRecord:
    """Ground-truth annotation for one image.

    ``primary`` must be non-empty and disjoint from ``secondary``; both hold
    motif indices into the manifest vocabulary.
    """

    image_id: str
    primary: frozenset[int]
    secondary: frozenset[int] = frozenset()
    tag: Tag = Tag.STANDARD

    def validate(self, n_classes: int) -> None:
        if not self.image_id:
            raise DataError("empty image_id")
        if not self.primary:
            raise DataError(f"record {self.image_id!r}: empty primary_motifs")
        if self.primary & self.secondary:
            raise DataError(
                f"record {self.image_id!r}: primary and secondary motifs overlap")
        for idx in self.primary | self.secondary:
            if not 0 <= idx < n_classes:
                raise DataError(
                    f"record {self.image_id!r}: motif index {idx} out of range")


@dataclass
class DatasetManifest:
    motif_names: list[str]
    records: list[AnnotationRecord]
    split: dict[str, str] = field(default_factory=dict)  # image_id -> train|test

    @property
    def n_classes(self) -> int:
        return len(self.motif_names)

    def validate(self) -> "DatasetManifest":
        if not self.motif_names:
            raise DataError("manifest declares no motifs")
        if len(set(self.motif_names)) != len(self.motif_names):
            raise DataError("duplicate motif names")
        if not self.records:
            raise DataError("empty dataset")
        seen: set[str] = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise DataError(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)
            rec.validate(self.n_classes)
        for image_id, part in self.split.items():
            if image_id not in seen:
                raise DataError(f"split assigns unknown image_id {image_id!r}")
            if part not in ("train", "test"):
                raise DataError(f"split value {part!r} for {image_id!r}")
        return self

    def by_id(self) -> dict[str, AnnotationRecord]:
        return {rec.image_id: rec for rec in self.records}

    def ids_for(self, part: str) -> list[str]:
        """Image ids assigned to a split part, in record order."""
        return [r.image_id for r in self.records if self.split.get(r.image_id) == part]


def _parse_motif_list(text: str, name_to_idx: dict[str, int],
                      image_id: str) -> frozenset[int]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    idxs = set()
    for name in names:
        if name not in name_to_idx:
            raise DataError(f"record {image_id!r}: unknown motif name {name!r}")
        idxs.add(name_to_idx[name])
    return frozenset(idxs)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest file not found: {path}")
    motif_names: list[str] | None = None
    name_to_idx: dict[str, int] = {}
    records: list[AnnotationRecord] = []
    split: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@motifs"):
            if motif_names is not None:
                raise DataError(f"{path}:{lineno}: duplicate @motifs directive")
            motif_names = [n.strip() for n in line[len("@motifs"):].split(",") if n.strip()]
            name_to_idx = {n: i for i, n in enumerate(motif_names)}
            continue
        if motif_names is None:
            raise DataError(f"{path}:{lineno}: record before @motifs directive")
        fields = line.split("|")
        if not 3 <= len(fields) <= 5:
            raise DataError(f"{path}:{lineno}: expected 3-5 '|' fields, got {len(fields)}")
        image_id = fields[0].strip()
        primary = _parse_motif_list(fields[1], name_to_idx, image_id)
        secondary = _parse_motif_list(fields[2], name_to_idx, image_id)
        tag_text = fields[3].strip() if len(fields) > 3 else ""
        if tag_text:
            try:
                tag = Tag(tag_text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: unknown tag {tag_text!r}") from None
        else:
            tag = Tag.STANDARD
        records.append(AnnotationRecord(image_id, primary, secondary, tag))
        part = fields[4].strip() if len(fields) > 4 else ""
        if part:
            split[image_id] = part
    if motif_names is None:
        raise DataError(f"{path}: missing @motifs directive")
    return DatasetManifest(motif_names, records, split).validate()


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    manifest.validate()
    lines = ["@motifs " + ",".join(manifest.motif_names)]
    for rec in manifest.records:
        primary = ",".join(manifest.motif_names[i] for i in sorted(rec.primary))
        secondary = ",".join(manifest.motif_names[i] for i in sorted(rec.secondary))
        part = manifest.split.get(rec.image_id, "")
        lines.append("|".join([rec.image_id, primary, secondary, rec.tag.value, part]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def stratification_key(record: AnnotationRecord) -> int:
    """Lowest-index primary motif; the deterministic single-label proxy."""
    return min(record.primary)


def stratified_split(manifest: DatasetManifest, test_fraction: float,
                     seed: int) -> DatasetManifest:
    """Assign train/test per image, stratified by lowest-index primary motif.

    Deterministic for a given seed. The per-stratum test count is
    round(n * test_fraction) (half rounds up), so each motif's test share is
    within one image of the requested fraction. Returns a new manifest; the
    input is left untouched.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    manifest.validate()
    strata: dict[int, list[str]] = {}
    for rec in manifest.records:
        strata.setdefault(stratification_key(rec), []).append(rec.image_id)
    for motif_idx in sorted(strata):
        if len(strata[motif_idx]) < 2:
            raise DataError(
                f"motif {manifest.motif_names[motif_idx]!r} has fewer than 2 images; "
                "cannot split")
    rng = np.random.default_rng(seed)
    split: dict[str, str] = {}
    for motif_idx in sorted(strata):
        ids = sorted(strata[motif_idx])
        order = rng.permutation(len(ids))
        n_test = int(math.floor(len(ids) * test_fraction + 0.5))
        test_positions = set(order[:n_test].tolist())
        for pos, image_id in enumerate(ids):
            split[image_id] = "test" if pos in test_positions else "train"
    return replace(manifest, split=split)


def motif_counts(manifest: DatasetManifest, records: Iterable[AnnotationRecord] | None = None,
                 ) -> np.ndarray:
    """Primary-motif occurrence counts over the given records (default: all)."""
    counts = np.zeros(manifest.n_classes, dtype=np.int64)
    for rec in (manifest.records if records is None else records):
        for idx in rec.primary:
            counts[idx] += 1
    return counts
