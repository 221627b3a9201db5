"""Training loop wiring data, head, loss, optimizer, and metrics together.

Runs are deterministic for a given config: the per-epoch shuffle order is
drawn from a generator seeded with (seed, epoch), batches keep the remainder
(a short final batch is averaged over its own size), and evaluation never
touches optimizer state. A run directory contains only byte-reproducible
artifacts:

    config.toml       exact snapshot of the effective configuration
    loss_log.tsv      epoch <tab> mean train loss
    checkpoint.mhck   final parameters
    metrics_*.txt     per-slice reports (all / red_flag / canonical)
    metrics.tsv       the same reports as one flat table

Wall-clock time is reported on the returned RunRecord only, never written,
so rerunning a config produces bit-identical files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .adam import AdamState, adam_step
from .errors import ConfigError, DataError, NumericError
from .heads import HeadConfig, HeadParams, backward, forward_batch, init_params, \
    load_checkpoint, save_checkpoint
from .losses import LossConfig, batch_loss_and_grad
from .manifest import DatasetManifest
from .metrics import MetricsReport, PredictionSet, build_report, format_report, \
    slice_report, write_reports
from .store import EmbeddingStore


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    epochs: int = 200
    batch_size: int = 256
    lr: float = 0.001
    loss: LossConfig = field(default_factory=LossConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    eval_every: int = 0  # epochs between test evaluations; 0 = final only
    threshold: float = 0.5

    def validate(self) -> "TrainConfig":
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.eval_every < 0:
            raise ConfigError(f"eval_every must be >= 0, got {self.eval_every}")
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"threshold out of range (0, 1]: {self.threshold}")
        self.loss.validate()
        self.head.validate()
        return self


@dataclass
class RunRecord:
    config: TrainConfig
    epoch_losses: list[float]
    eval_reports: list[tuple[int, MetricsReport]]
    final_reports: dict[str, MetricsReport]
    checkpoint_path: Path | None
    wall_clock_s: float
    params: HeadParams | None = None  # in-process convenience, never serialized


def _predict_from_matrix(params: HeadParams, features: np.ndarray,
                         ids: Sequence[str], threshold: float) -> list[PredictionSet]:
    logits, _ = forward_batch(params, features)
    probs = kernels.sigmoid_array(logits)
    return [PredictionSet.from_probabilities(image_id, probs[i], threshold)
            for i, image_id in enumerate(ids)]


def predict(params_or_checkpoint, store: EmbeddingStore, ids: Sequence[str],
            threshold: float = 0.5) -> list[PredictionSet]:
    """Probabilities (sigmoid of logits) and thresholded motif sets per id."""
    params = params_or_checkpoint
    if not isinstance(params, HeadParams):
        params = load_checkpoint(params)
    if store.dim != params.config.input_dim:
        raise DataError(
            f"store dim {store.dim} != head input_dim {params.config.input_dim}")
    return _predict_from_matrix(params, store.matrix(ids), ids, threshold)


def train(manifest: DatasetManifest, store: EmbeddingStore, config: TrainConfig,
          out_dir: str | Path | None = None) -> RunRecord:
    """Train a head on the manifest's train split; evaluate on its test split."""
    t0 = time.perf_counter()
    config.validate()
    manifest.validate()
    train_ids = manifest.ids_for("train")
    test_ids = manifest.ids_for("test")
    if not train_ids:
        raise DataError("manifest has no train split assigned; run stratified_split")
    if store.dim != config.head.input_dim:
        raise DataError(
            f"store dim {store.dim} != head input_dim {config.head.input_dim}")
    by_id = manifest.by_id()
    x_train = store.matrix(train_ids)
    kernels.check_finite(x_train, "train embeddings")
    anns_train = [by_id[i] for i in train_ids]
    x_test = store.matrix(test_ids) if test_ids else None

    params = init_params(config.head, config.seed)
    state = AdamState.for_params(params.tensors(), lr=config.lr)
    n = len(train_ids)
    epoch_losses: list[float] = []
    eval_reports: list[tuple[int, MetricsReport]] = []

    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits, trace = forward_batch(params, x_train[idx])
            batch_anns = [anns_train[i] for i in idx]
            loss, dlogits = batch_loss_and_grad(logits, batch_anns, config.loss)
            grads = backward(params, trace, dlogits)
            adam_step(params.tensors(), grads.tensors(), state)
            loss_sum += loss * len(idx)
        epoch_loss = loss_sum / n
        if not np.isfinite(epoch_loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        epoch_losses.append(epoch_loss)
        if (config.eval_every > 0 and x_test is not None
                and (epoch + 1) % config.eval_every == 0
                and epoch + 1 < config.epochs):
            preds = _predict_from_matrix(params, x_test, test_ids, config.threshold)
            eval_reports.append((epoch + 1, build_report(preds, by_id)))

    final_reports: dict[str, MetricsReport] = {}
    if x_test is not None:
        preds = _predict_from_matrix(params, x_test, test_ids, config.threshold)
        for slice_name in ("all", "red_flag", "canonical"):
            final_reports[slice_name] = slice_report(preds, manifest, slice_name)
    else:
        final_reports["all"] = MetricsReport(slice_label="all", n_images=0)

    checkpoint_path: Path | None = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        from .runconfig import render_train_config  # deferred: avoids a cycle

        (out / "config.toml").write_text(render_train_config(config), encoding="utf-8")
        log_lines = [f"{epoch}\t{format(loss, '.17g')}"
                     for epoch, loss in enumerate(epoch_losses)]
        (out / "loss_log.tsv").write_text("epoch\tloss\n" + "\n".join(log_lines) + "\n",
                                          encoding="utf-8")
        checkpoint_path = out / "checkpoint.mhck"
        save_checkpoint(params, checkpoint_path)
        for slice_name, report in final_reports.items():
            (out / f"metrics_{slice_name}.txt").write_text(format_report(report),
                                                           encoding="utf-8")
        write_reports(final_reports.values(), out / "metrics.tsv")

    return RunRecord(config=config, epoch_losses=epoch_losses,
                     eval_reports=eval_reports, final_reports=final_reports,
                     checkpoint_path=checkpoint_path,
                     wall_clock_s=time.perf_counter() - t0, params=params)
