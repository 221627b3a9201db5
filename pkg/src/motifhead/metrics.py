"""Example-based multi-label evaluation.

Per-image terms are averaged over the test set:

    P  = mean |O and GT| / |GT|
    R  = mean |O and GT| / |O|
    F1 = 2PR / (P + R)

where O is the set of motifs whose predicted probability reaches the
threshold and GT defaults to the primary motifs (``with_secondary`` counts
primary union secondary as correct). Note the denominators: this orientation
is kept exactly as the method defines it, with P normalized by the ground
truth and R by the prediction set; pass ``conventional_pr=True`` for the
swapped, textbook orientation.

Conventions that make every metric total: an empty prediction set
contributes 0 to the R sum and can never be an exact match (ground truth is
non-empty by contract); argmax ties resolve to the lowest index and are
counted in the report diagnostics.

Maximum accuracy is the fraction of images whose single most probable motif
belongs to the ground-truth set; exact match requires O == GT exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .manifest import AnnotationRecord, DatasetManifest, Tag


@dataclass(frozen=True)
class PredictionSet:
    image_id: str
    probabilities: np.ndarray  # (N,) float64
    threshold: float
    predicted: frozenset[int]
    argmax: int
    tie_count: int  # indices sharing the max probability (1 = unique argmax)

    @classmethod
    def from_probabilities(cls, image_id: str, probabilities: np.ndarray,
                           threshold: float = 0.5) -> "PredictionSet":
        p = np.asarray(probabilities, dtype=np.float64).reshape(-1)
        predicted = frozenset(int(j) for j in np.flatnonzero(p >= threshold))
        argmax = int(np.argmax(p))  # first occurrence = lowest index
        tie_count = int(np.sum(p == p[argmax]))
        return cls(image_id, p, float(threshold), predicted, argmax, tie_count)


@dataclass
class MetricsReport:
    slice_label: str
    n_images: int
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    f1_with_sm: float = 0.0
    max_accuracy: float = 0.0
    exact_match: float = 0.0
    n_empty_predictions: int = 0
    n_argmax_ties: int = 0
    empty_prediction_ids: tuple[str, ...] = ()
    argmax_tie_ids: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return self.n_images == 0


def _f1(p: float, r: float) -> float:
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _ground_truth(annotation: AnnotationRecord, mode: str) -> frozenset[int]:
    if mode == "primary_only":
        return annotation.primary
    if mode == "with_secondary":
        return annotation.primary | annotation.secondary
    raise DataError(f"unknown metrics mode {mode!r}")


def _aligned(predictions: Sequence[PredictionSet],
             annotations: Mapping[str, AnnotationRecord] | Sequence[AnnotationRecord],
             ) -> list[tuple[PredictionSet, AnnotationRecord]]:
    if not isinstance(annotations, Mapping):
        annotations = {a.image_id: a for a in annotations}
    pairs = []
    for pred in predictions:
        ann = annotations.get(pred.image_id)
        if ann is None:
            raise DataError(f"no annotation for predicted image {pred.image_id!r}")
        if not ann.primary:
            raise DataError(f"empty ground truth for {pred.image_id!r}")
        pairs.append((pred, ann))
    return pairs


def example_metrics(predictions: Sequence[PredictionSet],
                    annotations: Mapping[str, AnnotationRecord] | Sequence[AnnotationRecord],
                    mode: str = "primary_only",
                    conventional_pr: bool = False) -> tuple[float, float, float]:
    """(P, R, F1) over the test set. See the module docstring for orientation."""
    pairs = _aligned(predictions, annotations)
    if not pairs:
        raise DataError("empty test set")
    p_sum = 0.0
    r_sum = 0.0
    for pred, ann in pairs:
        gt = _ground_truth(ann, mode)
        hits = len(pred.predicted & gt)
        gt_term = hits / len(gt)
        o_term = hits / len(pred.predicted) if pred.predicted else 0.0
        if conventional_pr:
            p_sum += o_term
            r_sum += gt_term
        else:
            p_sum += gt_term
            r_sum += o_term
    p = p_sum / len(pairs)
    r = r_sum / len(pairs)
    return p, r, _f1(p, r)


def max_accuracy(predictions: Sequence[PredictionSet],
                 annotations: Mapping[str, AnnotationRecord] | Sequence[AnnotationRecord],
                 mode: str = "primary_only") -> float:
    pairs = _aligned(predictions, annotations)
    if not pairs:
        raise DataError("empty test set")
    hits = sum(1 for pred, ann in pairs if pred.argmax in _ground_truth(ann, mode))
    return hits / len(pairs)


def exact_match_rate(predictions: Sequence[PredictionSet],
                     annotations: Mapping[str, AnnotationRecord] | Sequence[AnnotationRecord],
                     mode: str = "primary_only") -> float:
    pairs = _aligned(predictions, annotations)
    if not pairs:
        raise DataError("empty test set")
    hits = sum(1 for pred, ann in pairs
               if pred.predicted and pred.predicted == _ground_truth(ann, mode))
    return hits / len(pairs)


def build_report(predictions: Sequence[PredictionSet],
                 annotations: Mapping[str, AnnotationRecord] | Sequence[AnnotationRecord],
                 slice_label: str = "all",
                 conventional_pr: bool = False) -> MetricsReport:
    """Full report; returns an empty-flagged report for an empty slice."""
    if not predictions:
        return MetricsReport(slice_label=slice_label, n_images=0)
    pairs = _aligned(predictions, annotations)
    empty_ids = tuple(pred.image_id for pred, _ in pairs if not pred.predicted)
    tie_ids = tuple(pred.image_id for pred, _ in pairs if pred.tie_count > 1)
    p, r, f1 = example_metrics(predictions, annotations, "primary_only",
                               conventional_pr)
    _, _, f1_sm = example_metrics(predictions, annotations, "with_secondary",
                                  conventional_pr)
    return MetricsReport(
        slice_label=slice_label,
        n_images=len(pairs),
        precision=p,
        recall=r,
        f1=f1,
        f1_with_sm=f1_sm,
        max_accuracy=max_accuracy(predictions, annotations),
        exact_match=exact_match_rate(predictions, annotations),
        n_empty_predictions=len(empty_ids),
        n_argmax_ties=len(tie_ids),
        empty_prediction_ids=empty_ids,
        argmax_tie_ids=tie_ids,
    )


_SLICE_TAGS = {"all": None, "red_flag": Tag.RED_FLAG, "canonical": Tag.CANONICAL}


def slice_report(predictions: Sequence[PredictionSet], manifest: DatasetManifest,
                 slice_name: str = "all",
                 conventional_pr: bool = False) -> MetricsReport:
    """Report restricted to test images carrying the slice's tag."""
    if slice_name not in _SLICE_TAGS:
        raise DataError(f"unknown slice {slice_name!r}; expected one of "
                        + ", ".join(_SLICE_TAGS))
    by_id = manifest.by_id()
    tag = _SLICE_TAGS[slice_name]
    selected = [p for p in predictions
                if tag is None or by_id[p.image_id].tag is tag]
    return build_report(selected, by_id, slice_label=slice_name,
                        conventional_pr=conventional_pr)


REPORT_COLUMNS = ("precision", "recall", "f1", "f1_with_sm", "max_accuracy",
                  "exact_match")


def format_report(report: MetricsReport) -> str:
    """One structured text document per slice."""
    lines = [f"slice: {report.slice_label}", f"images: {report.n_images}"]
    if report.empty:
        lines.append("status: empty slice (no metrics)")
        return "\n".join(lines) + "\n"
    for name in REPORT_COLUMNS:
        lines.append(f"{name}: {getattr(report, name):.6f}")
    lines.append(f"empty_predictions: {report.n_empty_predictions}")
    lines.append(f"argmax_ties: {report.n_argmax_ties}")
    return "\n".join(lines) + "\n"


def table_header(key: str = "point") -> str:
    return "\t".join([key, *REPORT_COLUMNS])


def table_row(key: str, report: MetricsReport) -> str:
    cells = [key] + [format(getattr(report, name), ".17g") for name in REPORT_COLUMNS]
    return "\t".join(cells)


def write_reports(reports: Iterable[MetricsReport], path) -> None:
    """Flat tabular file, one row per slice, matching the sweep table format."""
    rows = [table_header("slice")]
    rows += [table_row(r.slice_label, r) for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
