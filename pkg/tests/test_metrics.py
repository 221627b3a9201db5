import itertools
import math

import numpy as np
import pytest

from motifhead.errors import DataError
from motifhead.manifest import AnnotationRecord, DatasetManifest, Tag
from motifhead.metrics import (MetricsReport, PredictionSet, build_report,
                               example_metrics, exact_match_rate, format_report,
                               max_accuracy, slice_report, table_row)

# --- independent brute-force oracle --------------------------------------


def oracle_metrics(outputs, truths):
    """P sums |O&GT|/|GT|, R sums |O&GT|/|O| (0 when O is empty)."""
    p_terms = []
    r_terms = []
    for o, gt in zip(outputs, truths):
        inter = len(o & gt)
        p_terms.append(inter / len(gt))
        r_terms.append(inter / len(o) if o else 0.0)
    p = sum(p_terms) / len(outputs)
    r = sum(r_terms) / len(outputs)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f1


def oracle_ma(argmaxes, truths):
    return sum(1 for a, gt in zip(argmaxes, truths) if a in gt) / len(truths)


def oracle_exact(outputs, truths):
    return sum(1 for o, gt in zip(outputs, truths) if o and o == gt) / len(truths)


def prediction_from_set(image_id, output_set, n_classes, argmax=None):
    """Probabilities whose >= 0.5 set is exactly output_set."""
    p = np.full(n_classes, 0.1)
    for j in output_set:
        p[j] = 0.9
    if argmax is not None:
        p[argmax] = 0.95 if argmax in output_set else 0.4
    return PredictionSet.from_probabilities(image_id, p, 0.5)


def annotations_for(truths, secondaries=None):
    secondaries = secondaries or [frozenset()] * len(truths)
    return [AnnotationRecord(f"i{k}", frozenset(gt), frozenset(sec))
            for k, (gt, sec) in enumerate(zip(truths, secondaries))]


# --- basic cases ----------------------------------------------------------


def test_perfect_predictions():
    anns = annotations_for([{0}, {1, 2}, {3}])
    preds = [prediction_from_set(a.image_id, a.primary, 4) for a in anns]
    p, r, f1 = example_metrics(preds, anns)
    assert (p, r, f1) == (1.0, 1.0, 1.0)
    assert max_accuracy(preds, anns) == 1.0
    assert exact_match_rate(preds, anns) == 1.0


def test_singleton_overprediction():
    # GT={A}, O={A,B}: printed-orientation P term 1/1, R term 1/2.
    anns = annotations_for([{0}])
    preds = [prediction_from_set("i0", {0, 1}, 3)]
    p, r, f1 = example_metrics(preds, anns)
    assert p == 1.0
    assert r == 0.5
    assert f1 == pytest.approx(2 / 3, abs=1e-15)


def test_conventional_orientation_swaps_terms():
    anns = annotations_for([{0}])
    preds = [prediction_from_set("i0", {0, 1}, 3)]
    p, r, _ = example_metrics(preds, anns, conventional_pr=True)
    assert p == 0.5
    assert r == 1.0


def test_exhaustive_pairs_match_oracle_exactly():
    # Every (O, GT) pair for N = 3, one-image test sets: no tolerance.
    n = 3
    subsets = [frozenset(s) for r in range(n + 1)
               for s in itertools.combinations(range(n), r)]
    for gt in subsets:
        if not gt:
            continue
        for o in subsets:
            anns = annotations_for([gt])
            preds = [prediction_from_set("i0", o, n)]
            got = example_metrics(preds, anns)
            assert got == oracle_metrics([o], [gt])
            assert exact_match_rate(preds, anns) == oracle_exact([o], [gt])
            assert max_accuracy(preds, anns) == oracle_ma([preds[0].argmax], [gt])


def test_random_multi_image_sets_match_oracle():
    rng = np.random.default_rng(0)
    n = 5
    for _ in range(200):
        size = int(rng.integers(1, 4))
        truths, outputs = [], []
        for _ in range(size):
            gt = frozenset(int(j) for j in rng.choice(n, rng.integers(1, n),
                                                      replace=False))
            o = frozenset(int(j) for j in np.flatnonzero(rng.random(n) < 0.4))
            truths.append(gt)
            outputs.append(o)
        anns = annotations_for(truths)
        preds = [prediction_from_set(f"i{k}", o, n) for k, o in enumerate(outputs)]
        assert example_metrics(preds, anns) == oracle_metrics(outputs, truths)
        assert exact_match_rate(preds, anns) == oracle_exact(outputs, truths)


def test_monotonicity_of_terms():
    rng = np.random.default_rng(1)
    n = 6
    for _ in range(100):
        gt = frozenset(int(j) for j in rng.choice(n, 3, replace=False))
        o = frozenset(int(j) for j in np.flatnonzero(rng.random(n) < 0.3))
        p0, r0, _ = oracle_metrics([o], [gt])
        missing_correct = sorted(gt - o)
        if missing_correct:
            p1, _, _ = oracle_metrics([o | {missing_correct[0]}], [gt])
            assert p1 >= p0
        wrong = sorted(set(range(n)) - gt - o)
        if wrong:
            _, r1, _ = oracle_metrics([o | {wrong[0]}], [gt])
            assert r1 <= r0 or not o  # empty O's R term can only rise from 0


def test_with_secondary_credit_never_hurts_on_superset_predictions():
    anns = annotations_for([{0}, {1}], secondaries=[{2}, {3}])
    preds = [prediction_from_set("i0", {0, 2}, 5),
             prediction_from_set("i1", {1, 3}, 5)]
    _, _, f1_primary = example_metrics(preds, anns, "primary_only")
    _, _, f1_sm = example_metrics(preds, anns, "with_secondary")
    assert f1_sm >= f1_primary
    assert f1_sm == 1.0


def test_f1_harmonic_identity():
    rng = np.random.default_rng(2)
    n = 4
    for _ in range(50):
        truths = [frozenset({int(rng.integers(n))}) for _ in range(3)]
        outputs = [frozenset(int(j) for j in np.flatnonzero(rng.random(n) < 0.5))
                   for _ in range(3)]
        anns = annotations_for(truths)
        preds = [prediction_from_set(f"i{k}", o, n) for k, o in enumerate(outputs)]
        p, r, f1 = example_metrics(preds, anns)
        expected = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        assert abs(f1 - expected) <= 1e-15
        assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0 and 0.0 <= f1 <= 1.0


def test_empty_prediction_sets_are_total():
    anns = annotations_for([{0}, {1}])
    low = np.full(3, 0.01)
    preds = [PredictionSet.from_probabilities("i0", low, 0.5),
             PredictionSet.from_probabilities("i1", low, 0.5)]
    p, r, f1 = example_metrics(preds, anns)
    assert (p, r, f1) == (0.0, 0.0, 0.0)
    assert exact_match_rate(preds, anns) == 0.0
    report = build_report(preds, anns)
    assert report.n_empty_predictions == 2
    assert report.empty_prediction_ids == ("i0", "i1")
    assert not math.isnan(report.f1)


def test_threshold_is_inclusive():
    pred = PredictionSet.from_probabilities("x", np.array([0.5, 0.49999]), 0.5)
    assert pred.predicted == {0}


def test_argmax_tie_resolves_to_lowest_index():
    pred = PredictionSet.from_probabilities("i0", np.array([0.4, 0.7, 0.7]), 0.5)
    assert pred.argmax == 1
    assert pred.tie_count == 2
    anns = annotations_for([{2}])
    assert max_accuracy([pred], anns) == 0.0
    report = build_report([pred], anns)
    assert report.n_argmax_ties == 1
    assert report.argmax_tie_ids == ("i0",)


def test_max_accuracy_half():
    anns = annotations_for([{0}, {1}])
    preds = [prediction_from_set("i0", {0}, 3, argmax=0),
             prediction_from_set("i1", {2}, 3, argmax=2)]
    assert max_accuracy(preds, anns) == 0.5


def test_exact_match_requires_identity():
    anns = annotations_for([{0}])
    assert exact_match_rate([prediction_from_set("i0", {0, 1}, 3)], anns) == 0.0
    assert exact_match_rate([prediction_from_set("i0", {0}, 3)], anns) == 1.0


def test_slice_reports(tiny_dataset):
    manifest, _, _ = tiny_dataset
    by_id = manifest.by_id()
    preds = [prediction_from_set(r.image_id, r.primary, 4)
             for r in manifest.records]
    for name, expected_n in (("all", 8), ("red_flag", 2), ("canonical", 2)):
        report = slice_report(preds, manifest, name)
        assert report.n_images == expected_n
        assert report.f1 == 1.0
        assert report.slice_label == name
    assert by_id  # alignment sanity


def test_empty_slice_is_flagged_not_divided():
    manifest = DatasetManifest(
        ["a"], [AnnotationRecord("x", frozenset({0}))]).validate()
    preds = [prediction_from_set("x", {0}, 1)]
    report = slice_report(preds, manifest, "canonical")
    assert report.empty
    assert report.n_images == 0
    assert "empty" in format_report(report)


def test_alignment_errors():
    anns = annotations_for([{0}])
    stray = prediction_from_set("ghost", {0}, 2)
    with pytest.raises(DataError, match="ghost"):
        example_metrics([stray], anns)
    with pytest.raises(DataError, match="empty test set"):
        example_metrics([], anns)


def test_report_fixture_formatting():
    # Output-format fixture: headline values from the reference experiment.
    # They are NOT reproducible here (the source dataset is unreleased) and
    # are used only to pin the report format.
    report = MetricsReport(slice_label="all", n_images=1076, precision=0.9055,
                           recall=0.9223, f1=0.9138, f1_with_sm=0.9136,
                           max_accuracy=0.9459, exact_match=0.88)
    text = format_report(report)
    assert "precision: 0.905500" in text
    assert "max_accuracy: 0.945900" in text
    row = table_row("all", report)
    cells = row.split("\t")
    assert cells[0] == "all"
    assert float(cells[3]) == 0.9138
