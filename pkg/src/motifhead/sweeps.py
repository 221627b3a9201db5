"""Ablation grids: train one model per grid point, tabulate the metrics.

A sweep spec names a base config and one or more axes; the grid is the
cross product of the axis values in spec order. Every point trains with the
same seed on the same pre-assigned split, so result differences isolate the
swept fields. Axis names are dotted config paths, e.g.

    [axes]
    "loss.smt" = [0.0, 0.25, 0.5, 0.75, 1.0]

Typical grids: loss.smt over {0, 0.25, 0.5, 0.75, 1}; loss.rfw x loss.cw
over {0.5, 0.75, 1} x {1, 1.5, 2}; head.hidden_dims lists for 2/3/4-layer
heads; head.conv_kernel over 2..6 for conv heads.

The output table (one row per grid point, metric columns) is plain
whitespace-delimited text, directly loadable by pgfplots/gnuplot/pandas.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .errors import ConfigError, DataError
from .manifest import DatasetManifest
from .metrics import REPORT_COLUMNS, MetricsReport
from .store import EmbeddingStore
from .training import RunRecord, TrainConfig, train

_AXIS_FIELDS = {
    "train": ("lr", "epochs", "batch_size", "threshold"),
    "loss": ("smt", "rfw", "cw"),
    "head": ("hidden_dims", "conv_kernel", "conv_channels"),
}


@dataclass
class SweepSpec:
    base: TrainConfig
    axes: list[tuple[str, list[Any]]]  # (dotted field name, values), spec order
    out_dir: Path | None = None
    metrics: tuple[str, ...] = REPORT_COLUMNS
    data_doc: dict = dataclasses.field(default_factory=dict)  # [data] passthrough

    def validate(self) -> "SweepSpec":
        self.base.validate()
        if not self.axes:
            raise ConfigError("sweep spec declares no axes")
        for name, values in self.axes:
            _resolve_axis(name)  # raises on unknown fields
            if not values:
                raise ConfigError(f"axis {name!r} has no values")
        for metric in self.metrics:
            if metric not in REPORT_COLUMNS:
                raise ConfigError(f"unknown metric {metric!r}; expected one of "
                                  + ", ".join(REPORT_COLUMNS))
        size = 1
        for _, values in self.axes:
            size *= len(values)
        if size < 1:
            raise ConfigError("empty sweep grid")
        return self


def _resolve_axis(dotted: str) -> tuple[str, str]:
    section, _, key = dotted.partition(".")
    if not key and section in _AXIS_FIELDS["train"]:
        section, key = "train", section
    if section not in _AXIS_FIELDS or key not in _AXIS_FIELDS[section]:
        raise ConfigError(f"axis {dotted!r} does not name a sweepable config field")
    return section, key


def apply_axis(config: TrainConfig, dotted: str, value: Any) -> TrainConfig:
    section, key = _resolve_axis(dotted)
    if section == "train":
        return dataclasses.replace(config, **{key: value})
    if section == "loss":
        return dataclasses.replace(config, loss=dataclasses.replace(config.loss,
                                                                    **{key: value}))
    new_head = dataclasses.replace(
        config.head, **{key: tuple(value) if isinstance(value, list) else value})
    return dataclasses.replace(config, head=new_head)


def format_point_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return "x".join(format_point_value(v) for v in value)
    if isinstance(value, float):
        return format(value, "g")
    return str(value)


def grid_points(spec: SweepSpec) -> list[tuple[str, dict[str, Any]]]:
    """(point name, {axis: value}) for every grid point, in product order."""
    names = [name for name, _ in spec.axes]
    combos = itertools.product(*(values for _, values in spec.axes))
    points = []
    for combo in combos:
        settings = dict(zip(names, combo))
        label = ",".join(f"{n.split('.')[-1]}={format_point_value(v)}"
                         for n, v in settings.items())
        points.append((label, settings))
    return points


@dataclass
class SweepRow:
    point: str
    settings: dict[str, Any]
    report: MetricsReport
    run: RunRecord


def run_sweep(spec: SweepSpec, manifest: DatasetManifest,
              store: EmbeddingStore) -> list[SweepRow]:
    """Train every grid point; abort naming the point if one fails."""
    spec.validate()
    if not manifest.ids_for("train") or not manifest.ids_for("test"):
        raise DataError("sweep requires a manifest with an assigned train/test split")
    rows: list[SweepRow] = []
    for label, settings in grid_points(spec):
        config = spec.base
        for dotted, value in settings.items():
            config = apply_axis(config, dotted, value)
        point_dir = None
        if spec.out_dir is not None:
            point_dir = Path(spec.out_dir) / "points" / label.replace("/", "_")
        try:
            run = train(manifest, store, config, out_dir=point_dir)
        except Exception as exc:
            raise type(exc)(f"sweep point {label!r} failed: {exc}") from exc
        rows.append(SweepRow(point=label, settings=settings,
                             report=run.final_reports["all"], run=run))
    if spec.out_dir is not None:
        write_table(rows, Path(spec.out_dir) / "sweep.tsv", spec.metrics)
    return rows


def write_table(rows: Sequence[SweepRow], path,
                metrics: Sequence[str] = REPORT_COLUMNS) -> None:
    lines = ["\t".join(["point", *metrics])]
    for row in rows:
        cells = [row.point] + [format(getattr(row.report, m), ".17g") for m in metrics]
        lines.append("\t".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def rank_models(rows: Sequence[SweepRow], metric: str) -> list[tuple[int, str, float]]:
    """(rank, point, value) best first; ties break by point name."""
    if metric not in REPORT_COLUMNS:
        raise ConfigError(f"unknown metric {metric!r}; expected one of "
                          + ", ".join(REPORT_COLUMNS))
    ordered = sorted(rows, key=lambda r: (-getattr(r.report, metric), r.point))
    return [(i + 1, row.point, getattr(row.report, metric))
            for i, row in enumerate(ordered)]


def load_sweep_spec(path: str | Path, out_dir: Path | None = None,
                    overrides: dict[str, Any] | None = None) -> SweepSpec:
    """Parse a sweep spec file: a run config plus an [axes] table.

    Axis order in the file fixes the grid product order. An optional
    top-level ``metrics`` array restricts the reported columns.
    """
    from . import runconfig

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"sweep spec not found: {path}")
    try:
        doc = runconfig.tomllib.loads(path.read_text(encoding="utf-8"))
    except runconfig.tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    axes_doc = doc.pop("axes", None)
    metrics = doc.pop("metrics", list(REPORT_COLUMNS))
    runconfig._check_keys(doc, str(path))
    if not axes_doc:
        raise ConfigError(f"{path}: sweep spec needs a non-empty [axes] table")
    base = runconfig.build_train_config(doc, overrides)
    axes = [(name, list(values)) for name, values in axes_doc.items()]
    return SweepSpec(base=base, axes=axes, out_dir=out_dir,
                     metrics=tuple(metrics),
                     data_doc=dict(doc.get("data", {}))).validate()
