import dataclasses

import numpy as np
import pytest

from motifhead.errors import ConfigError, DataError
from motifhead.heads import HeadConfig, init_params, load_checkpoint, save_checkpoint
from motifhead.losses import LossConfig
from motifhead.manifest import (AnnotationRecord, DatasetManifest,
                                stratified_split)
from motifhead.store import open_embedding_store, write_store
from motifhead.synthetic import generate_synthetic
from motifhead.training import TrainConfig, predict, train


def small_head(dim, n_classes, hidden=(16,)):
    return HeadConfig(input_dim=dim, hidden_dims=hidden, output_dim=n_classes)


def synth_run(tmp_path, n_classes=5, dim=8, per_class=12, sm_rate=0.2,
              noise=0.05, seed=3, name="s"):
    manifest, emb = generate_synthetic(n_classes, dim, per_class, sm_rate,
                                       0.1, 0.1, noise, seed)
    manifest = stratified_split(manifest, 0.25, seed)
    path = tmp_path / f"{name}.mhed"
    write_store(path, dim, emb)
    return manifest, open_embedding_store(path)


def test_config_validation():
    good = TrainConfig(seed=1, head=small_head(8, 5))
    good.validate()
    with pytest.raises(ConfigError, match="epochs"):
        dataclasses.replace(good, epochs=0).validate()
    with pytest.raises(ConfigError, match="batch_size"):
        dataclasses.replace(good, batch_size=0).validate()
    with pytest.raises(ConfigError, match="smt"):
        dataclasses.replace(good, loss=LossConfig(smt=1.5)).validate()
    with pytest.raises(ConfigError, match="seed"):
        dataclasses.replace(good, seed=-1).validate()


def test_training_is_bit_deterministic(tmp_path):
    manifest, store = synth_run(tmp_path)
    config = TrainConfig(seed=7, epochs=8, batch_size=16, head=small_head(8, 5))
    with store:
        r1 = train(manifest, store, config, out_dir=tmp_path / "run1")
        r2 = train(manifest, store, config, out_dir=tmp_path / "run2")
    assert r1.epoch_losses == r2.epoch_losses  # exact float equality
    assert (tmp_path / "run1" / "checkpoint.mhck").read_bytes() == \
        (tmp_path / "run2" / "checkpoint.mhck").read_bytes()
    assert (tmp_path / "run1" / "loss_log.tsv").read_bytes() == \
        (tmp_path / "run2" / "loss_log.tsv").read_bytes()
    assert (tmp_path / "run1" / "metrics.tsv").read_bytes() == \
        (tmp_path / "run2" / "metrics.tsv").read_bytes()


def test_seed_changes_trajectory(tmp_path):
    manifest, store = synth_run(tmp_path)
    base = TrainConfig(seed=1, epochs=3, batch_size=16, head=small_head(8, 5))
    with store:
        r1 = train(manifest, store, base)
        r2 = train(manifest, store, dataclasses.replace(base, seed=2))
    assert r1.epoch_losses != r2.epoch_losses


def test_separable_data_trains_to_high_f1(tmp_path):
    manifest, store = synth_run(tmp_path, n_classes=4, dim=8, per_class=20,
                                sm_rate=0.0, noise=0.02, seed=5)
    # Small head, so give Adam enough steps to walk the logits out.
    config = TrainConfig(seed=5, epochs=150, batch_size=16, lr=0.005,
                         head=small_head(8, 4, hidden=(32,)))
    with store:
        record = train(manifest, store, config)
    report = record.final_reports["all"]
    assert report.f1 >= 0.99
    assert report.max_accuracy >= 0.99
    assert record.epoch_losses[-1] < 0.05


def test_loss_curve_eventually_monotone(tmp_path):
    manifest, store = synth_run(tmp_path, per_class=20, noise=0.05)
    config = TrainConfig(seed=9, epochs=40, batch_size=32, head=small_head(8, 5))
    with store:
        record = train(manifest, store, config)
    first = np.mean(record.epoch_losses[:10])
    last = np.mean(record.epoch_losses[-10:])
    assert last < first


def test_never_positive_class_is_suppressed(tmp_path):
    # Class 3 exists in the vocabulary but is never labeled positive.
    rng = np.random.default_rng(0)
    records = []
    emb = {}
    for i in range(90):
        c = i % 3
        image_id = f"i{i:03d}"
        records.append(AnnotationRecord(image_id, frozenset({c})))
        vec = np.zeros(8)
        vec[c] = 1.0
        emb[image_id] = (vec + 0.05 * rng.standard_normal(8)).astype(np.float32)
    manifest = DatasetManifest(["a", "b", "c", "never"], records).validate()
    manifest = stratified_split(manifest, 0.2, 1)
    write_store(tmp_path / "n.mhed", 8, emb)
    config = TrainConfig(seed=2, epochs=200, batch_size=32, head=small_head(8, 4))
    with open_embedding_store(tmp_path / "n.mhed") as store:
        record = train(manifest, store, config)
        preds = predict(record.params, store, manifest.ids_for("test"))
    mean_p_never = float(np.mean([p.probabilities[3] for p in preds]))
    assert mean_p_never < 0.05


def test_secondary_deletion_equals_smt_zero_bitwise(tmp_path):
    manifest, store = synth_run(tmp_path, sm_rate=0.4, seed=11)
    stripped = dataclasses.replace(
        manifest,
        records=[dataclasses.replace(r, secondary=frozenset())
                 for r in manifest.records])
    config = TrainConfig(seed=4, epochs=10, batch_size=16,
                         loss=LossConfig(smt=0.0), head=small_head(8, 5))
    with store:
        r_with = train(manifest, store, config)
        r_without = train(stripped, store, config)
    assert r_with.epoch_losses == r_without.epoch_losses
    for a, b in zip(r_with.params.tensors(), r_without.params.tensors()):
        assert a.tobytes() == b.tobytes()


def test_missing_split_rejected(tmp_path):
    manifest, emb = generate_synthetic(3, 8, 4, 0.0, 0.0, 0.0, 0.1, seed=1)
    write_store(tmp_path / "x.mhed", 8, emb)
    config = TrainConfig(seed=1, epochs=1, head=small_head(8, 3))
    with open_embedding_store(tmp_path / "x.mhed") as store:
        with pytest.raises(DataError, match="split"):
            train(manifest, store, config)


def test_store_dim_mismatch_rejected(tmp_path):
    manifest, store = synth_run(tmp_path)
    config = TrainConfig(seed=1, epochs=1, head=small_head(16, 5))
    with store:
        with pytest.raises(DataError, match="dim"):
            train(manifest, store, config)


def test_missing_embeddings_listed(tmp_path):
    manifest, emb = generate_synthetic(3, 8, 4, 0.0, 0.0, 0.0, 0.1, seed=1)
    manifest = stratified_split(manifest, 0.3, 1)
    some_id = manifest.records[0].image_id
    del emb[some_id]
    write_store(tmp_path / "x.mhed", 8, emb)
    config = TrainConfig(seed=1, epochs=1, head=small_head(8, 3))
    with open_embedding_store(tmp_path / "x.mhed") as store:
        with pytest.raises(DataError, match=some_id):
            train(manifest, store, config)


def test_predict_zero_weight_checkpoint(tmp_path):
    config = small_head(6, 4)
    params = init_params(config, 0)
    for t in params.tensors():
        t[...] = 0.0
    ids = ["a", "b"]
    write_store(tmp_path / "p.mhed", 6,
                {i: np.ones(6, dtype=np.float32) for i in ids})
    with open_embedding_store(tmp_path / "p.mhed") as store:
        preds = predict(params, store, ids, threshold=0.5)
    for p in preds:
        assert np.all(p.probabilities == 0.5)
        assert p.predicted == {0, 1, 2, 3}  # threshold is inclusive


def test_predict_threshold_one_gives_empty_sets(tmp_path):
    config = small_head(6, 4)
    params = init_params(config, 1)
    ids = ["a"]
    write_store(tmp_path / "p.mhed", 6,
                {i: np.ones(6, dtype=np.float32) for i in ids})
    with open_embedding_store(tmp_path / "p.mhed") as store:
        preds = predict(params, store, ids, threshold=1.0)
    assert preds[0].predicted == frozenset()


def test_predict_from_checkpoint_file(tmp_path):
    config = small_head(6, 3)
    params = init_params(config, 5)
    path = tmp_path / "c.mhck"
    save_checkpoint(params, path)
    ids = ["z"]
    write_store(tmp_path / "p.mhed", 6,
                {"z": np.arange(6, dtype=np.float32)})
    with open_embedding_store(tmp_path / "p.mhed") as store:
        from_file = predict(path, store, ids)
        in_memory = predict(load_checkpoint(path), store, ids)
    assert np.array_equal(from_file[0].probabilities, in_memory[0].probabilities)


def test_eval_cadence_records_reports(tmp_path):
    manifest, store = synth_run(tmp_path)
    config = TrainConfig(seed=1, epochs=9, batch_size=16, eval_every=3,
                         head=small_head(8, 5))
    with store:
        record = train(manifest, store, config)
    assert [e for e, _ in record.eval_reports] == [3, 6]
    assert "all" in record.final_reports
    assert record.final_reports["all"].n_images == len(manifest.ids_for("test"))


def test_run_directory_contents(tmp_path):
    manifest, store = synth_run(tmp_path)
    config = TrainConfig(seed=1, epochs=2, batch_size=16, head=small_head(8, 5))
    with store:
        record = train(manifest, store, config, out_dir=tmp_path / "run")
    run = tmp_path / "run"
    for name in ("config.toml", "loss_log.tsv", "checkpoint.mhck",
                 "metrics_all.txt", "metrics_red_flag.txt",
                 "metrics_canonical.txt", "metrics.tsv"):
        assert (run / name).exists(), name
    assert record.checkpoint_path == run / "checkpoint.mhck"
    assert record.wall_clock_s > 0
    # The snapshot parses back into the identical config.
    from motifhead.runconfig import build_train_config, load_config_doc
    assert build_train_config(load_config_doc(run / "config.toml")) == config
    lines = (run / "loss_log.tsv").read_text().splitlines()
    assert lines[0] == "epoch\tloss"
    assert len(lines) == 3

def test_predict_golden_fixture(tmp_path):
    # Frozen output: generated once by this implementation and checked in,
    # one file per kernel backend (they differ in the last few ulps).
    import pathlib

    from motifhead import kernels
    from motifhead.cli import main

    fixtures = pathlib.Path(__file__).parent / "fixtures"
    out = tmp_path / "pred.tsv"
    code = main(["predict",
                 "--checkpoint", str(fixtures / "golden_head.mhck"),
                 "--store", str(fixtures / "golden_store.mhed"),
                 "--ids", "art_0,art_1,art_2", "--out", str(out)])
    assert code == 0
    golden = fixtures / f"golden_predictions_{kernels.BACKEND}.tsv"
    assert out.read_bytes() == golden.read_bytes()
